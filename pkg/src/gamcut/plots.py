"""Figure rendering for the report command.

Reads the structured files written by the other commands and renders
matplotlib figures next to them; the delimited output stays the source of
truth."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

logger = logging.getLogger(__name__)


def _read_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def _parse_cut_text(text: str) -> dict:
    out = {}
    if not text:
        return out
    for part in text.split("|"):
        col, _, values = part.partition(":")
        if values:
            out[col] = [float(v) for v in values.split(";")]
    return out


def _plot_curves(run_dir: Path, out_dir: Path) -> list:
    curves = run_dir / "curves.csv"
    if not curves.exists():
        return []
    header, rows = _read_csv(curves)
    col_i = {name: i for i, name in enumerate(header)}
    by_cov: dict = {}
    for row in rows:
        by_cov.setdefault(row[col_i["covariate"]], []).append(row)
    cuts = {}
    cuts_file = run_dir / "cuts.csv"
    if cuts_file.exists():
        _, cut_rows = _read_csv(cuts_file)
        for cov, _, value in cut_rows:
            cuts.setdefault(cov, []).append(float(value))
    paths = []
    for cov, cov_rows in by_cov.items():
        x = np.array([float(r[col_i["x"]]) for r in cov_rows])
        fhat = np.array([float(r[col_i["fhat"]]) for r in cov_rows])
        se = np.array([float(r[col_i["se"]]) for r in cov_rows])
        fig, ax = plt.subplots(figsize=(7, 4.5))
        ax.fill_between(x, fhat - 2 * se, fhat + 2 * se, alpha=0.25,
                        color="tab:blue", linewidth=0, label="±2 se")
        ax.plot(x, fhat, color="tab:blue", label="smooth")
        fbar_raw = [r[col_i["fbar"]] for r in cov_rows]
        if any(v != "" for v in fbar_raw):
            fbar = np.array([float(v) if v != "" else np.nan for v in fbar_raw])
            ax.step(x, fbar, where="post", color="tab:red",
                    label="piecewise means")
        for c in cuts.get(cov, []):
            ax.axvline(c, color="black", linestyle="--", linewidth=0.9)
        ax.set_xlabel(cov)
        ax.set_ylabel(f"f({cov})")
        ax.legend(loc="best", fontsize=9)
        fig.tight_layout()
        path = out_dir / f"fig_curve_{cov}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths


def _plot_grid(run_dir: Path, out_dir: Path) -> list:
    grid = run_dir / "grid.csv"
    if not grid.exists():
        return []
    header, rows = _read_csv(grid)
    k_cols = [h for h in header if h.startswith("k_")]
    col_i = {name: i for i, name in enumerate(header)}
    labels, values, admissible = [], [], []
    for row in rows:
        if row[col_i["pseudo_bic"]] == "":
            continue
        labels.append(",".join(row[col_i[k]] for k in k_cols))
        values.append(float(row[col_i["pseudo_bic"]]))
        admissible.append(row[col_i["admissible"]] == "1")
    if not values:
        return []
    fig, ax = plt.subplots(figsize=(max(6, 0.45 * len(values)), 4))
    colors = ["tab:green" if a else "tab:gray" for a in admissible]
    ax.bar(range(len(values)), values, color=colors)
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(labels, rotation=90, fontsize=8)
    ax.set_xlabel("cut counts " + ",".join(c[2:] for c in k_cols))
    ax.set_ylabel("pseudo-BIC")
    ax.set_ylim(min(values) - 5, max(values) + 5)
    fig.tight_layout()
    path = out_dir / "fig_grid.png"
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return [path]


def _plot_replicates(run_dir: Path, out_dir: Path, meta: dict) -> list:
    reps = run_dir / "replicates.csv"
    if not reps.exists():
        return []
    header, rows = _read_csv(reps)
    col_i = {name: i for i, name in enumerate(header)}
    true_cuts = meta.get("results", {}).get("true_cuts", {})
    paths = []
    for key, title in (("fixed_cuts", "fixed-at-truth"), ("selected_cuts", "selected")):
        per_cut: dict = {}
        for row in rows:
            cuts = _parse_cut_text(row[col_i[key]])
            for col, values in cuts.items():
                if col in true_cuts and len(values) != len(true_cuts[col]):
                    continue  # boxplots only for truth-sized estimates
                for s, v in enumerate(values):
                    per_cut.setdefault(f"{col}[{s + 1}]", []).append(v)
        if not per_cut:
            continue
        labels = sorted(per_cut)
        fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(labels), 4))
        ax.boxplot([per_cut[lab] for lab in labels], tick_labels=labels)
        for i, lab in enumerate(labels):
            col, idx = lab[:-1].split("[")
            if col in true_cuts:
                ax.hlines(true_cuts[col][int(idx) - 1], i + 0.75, i + 1.25,
                          color="tab:red", linestyle="--")
        ax.set_ylabel("estimated cut-off point")
        ax.set_title(f"{title} cut estimates")
        fig.tight_layout()
        path = out_dir / f"fig_cuts_{key.split('_')[0]}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    table = run_dir / "selection_table.csv"
    if table.exists():
        _, rows = _read_csv(table)
        rows = [r for r in rows if r[0] != "none-admissible"]
        if rows:
            labels = [r[0] for r in rows]
            freq = [float(r[2]) for r in rows]
            fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(labels)), 4))
            ax.bar(range(len(freq)), freq, color="tab:blue")
            ax.set_xticks(range(len(freq)))
            ax.set_xticklabels(labels, rotation=45)
            ax.set_xlabel("selected nc")
            ax.set_ylabel("frequency")
            ax.set_ylim(0, 1)
            fig.tight_layout()
            path = out_dir / "fig_selection.png"
            fig.savefig(path, dpi=150)
            plt.close(fig)
            paths.append(path)
    return paths


def render_run(run_dir, out_dir=None) -> list:
    """Render figures for a previous run's output directory."""
    run_dir = Path(run_dir)
    out_dir = run_dir if out_dir is None else Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    meta_path = run_dir / "run.json"
    if not meta_path.exists():
        raise FileNotFoundError(f"{meta_path} not found; not a gamcut run directory")
    meta = json.loads(meta_path.read_text())
    command = meta.get("command", "")
    paths = []
    if command == "simulate":
        paths.extend(_plot_replicates(run_dir, out_dir, meta))
    else:
        paths.extend(_plot_curves(run_dir, out_dir))
        paths.extend(_plot_grid(run_dir, out_dir))
    logger.info("rendered %d figures into %s", len(paths), out_dir)
    return paths
