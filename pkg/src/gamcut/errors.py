"""Exception types shared across the package."""

from __future__ import annotations


class GamcutError(Exception):
    """Base class for all errors raised by gamcut."""


class DataError(GamcutError):
    """Malformed or unusable input data."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class RankDeficiencyError(GamcutError):
    """Design matrix is not of full column rank.

    ``columns`` names the offending (collinear) columns.
    """

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; collinear columns: "
            + ", ".join(str(c) for c in self.columns)
        )


class ConvergenceError(GamcutError):
    """A fitting loop failed to converge."""

    def __init__(self, message, reason=None):
        super().__init__(message)
        self.reason = reason or message


class EmptyCategoryError(GamcutError):
    """A cut vector induces an interval containing no observations."""

    def __init__(self, interval_index, cuts=None):
        self.interval_index = interval_index
        self.cuts = None if cuts is None else tuple(cuts)
        super().__init__(
            f"empty category: interval {interval_index} of cuts {self.cuts} "
            "contains no observations"
        )


class InfeasibleCutsError(GamcutError):
    """The requested number of cut-off points cannot be populated on the data."""
