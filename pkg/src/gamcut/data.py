"""Column-oriented observation tables and delimited-text ingestion."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

logger = logging.getLogger(__name__)

NA_TOKENS = ("", "NA")


@dataclass
class Dataset:
    """Numeric columns of equal length."""

    columns: dict
    excluded_rows: int = 0
    source: str | None = None

    def __post_init__(self):
        lengths = {name: len(col) for name, col in self.columns.items()}
        if len(set(lengths.values())) > 1:
            raise DataError(f"columns have unequal lengths: {lengths}")
        self.columns = {
            name: np.asarray(col, dtype=float) for name, col in self.columns.items()
        }
        for name, col in self.columns.items():
            if not np.all(np.isfinite(col)):
                raise DataError(f"column {name!r} contains non-finite values",
                                column=name)

    @property
    def n(self) -> int:
        return len(next(iter(self.columns.values()))) if self.columns else 0

    @property
    def names(self) -> tuple:
        return tuple(self.columns)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.columns[name]
        except KeyError:
            raise DataError(
                f"column {name!r} not found; available: {list(self.columns)}",
                column=name,
            ) from None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.column(name)


def read_delimited(path, sep: str = ",") -> Dataset:
    """Read a delimited text file with a header row into a Dataset.

    Cells that are empty or literal "NA" mark the whole row for exclusion
    (complete-case analysis); the count of excluded rows is logged and stored
    on the returned Dataset.  Any other unparseable cell is an error naming
    the row and column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=sep)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        if len(set(header)) != len(header):
            raise DataError(f"{path}: duplicate column names in header {header}")
        rows = []
        excluded = 0
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}: row {lineno} has {len(row)} fields, expected "
                    f"{len(header)}",
                    row=lineno,
                )
            values = []
            skip = False
            for name, cell in zip(header, row):
                cell = cell.strip()
                if cell in NA_TOKENS:
                    skip = True
                    break
                try:
                    values.append(float(cell))
                except ValueError:
                    raise DataError(
                        f"{path}: cannot parse {cell!r} at row {lineno}, "
                        f"column {name!r}",
                        row=lineno,
                        column=name,
                    ) from None
            if skip:
                excluded += 1
                continue
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: no complete data rows")
    data = np.asarray(rows, dtype=float)
    if excluded:
        logger.info("%s: %d rows excluded (missing values)", path, excluded)
    return Dataset(
        columns={name: data[:, j] for j, name in enumerate(header)},
        excluded_rows=excluded,
        source=str(path),
    )


def write_delimited(path, header, rows, sep: str = ",") -> None:
    """Write rows of mixed scalars; floats use repr so values round-trip."""

    def fmt(v):
        if isinstance(v, (float, np.floating)):
            return repr(float(v))
        if isinstance(v, (int, np.integer)):
            return str(int(v))
        return "" if v is None else str(v)

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=sep, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
