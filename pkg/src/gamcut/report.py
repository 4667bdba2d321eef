"""Report writers: a human-readable summary plus machine-readable structured
files whose numeric content is byte-stable for a given configuration and
seed."""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .cutpoints import piecewise_means
from .data import write_delimited

logger = logging.getLogger(__name__)


def _versions() -> dict:
    import scipy

    from . import __version__

    return {"gamcut": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    return obj


def write_run_json(outdir: Path, command: str, config: dict, results: dict,
                   log_events=()) -> Path:
    payload = {
        "command": command,
        "config": _jsonable(config),
        "versions": _versions(),
        "log": _jsonable(list(log_events)),
        "results": _jsonable(results),
    }
    path = outdir / "run.json"
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")
    return path


def _write_summary(outdir: Path, lines) -> Path:
    path = outdir / "summary.txt"
    path.write_text("\n".join(lines) + "\n")
    return path


def _curve_rows(fit, data, cuts_by_col=None):
    rows = []
    for block in fit.blocks:
        if not block.is_smooth:
            continue
        col = block.term.column
        x = data.column(col)
        fhat = fit.smooth_values(col)
        se = fit.smooth_se(col)
        fbar = None
        interval = None
        if cuts_by_col and col in cuts_by_col:
            summary = piecewise_means(fhat, x, cuts_by_col[col])
            idx = np.searchsorted(np.asarray(cuts_by_col[col]), x, side="left")
            fbar = summary.means[idx]
            interval = idx
        order = np.argsort(x, kind="stable")
        for i in order:
            rows.append(
                (
                    col,
                    float(x[i]),
                    float(fhat[i]),
                    float(se[i]),
                    float(fbar[i]) if fbar is not None else None,
                    int(interval[i]) if interval is not None else None,
                )
            )
    return rows


def _category_rows(model, data):
    """Per-category bounds, occupancy, smooth means and refit coefficients."""
    rows = []
    for cv in model.cuts:
        col = cv.covariate
        x = data.column(col)
        fhat = model_gam_values(model, col)
        summary = piecewise_means(fhat, x, cv.cuts) if fhat is not None else None
        beta, cov = model.coefficients_for(col) if cv.k else (np.zeros(0), np.zeros((0, 0)))
        se = np.sqrt(np.maximum(np.diag(cov), 0.0)) if cv.k else np.zeros(0)
        bounds = [float(np.min(x))] + [float(c) for c in cv.cuts] + [float(np.max(x))]
        idx = np.searchsorted(np.asarray(cv.cuts), x, side="left")
        counts = np.bincount(idx, minlength=cv.k + 1)
        for s in range(cv.k + 1):
            rows.append(
                (
                    col,
                    s,
                    bounds[s],
                    bounds[s + 1],
                    int(counts[s]),
                    float(summary.means[s]) if summary is not None else None,
                    0.0 if s == 0 else float(beta[s - 1]),
                    0.0 if s == 0 else float(se[s - 1]),
                )
            )
    return rows


def model_gam_values(model, col):
    """Smooth evaluations of the pre-categorization fit, when available."""
    gam = getattr(model, "source_gam", None)
    if gam is None:
        return None
    try:
        return gam.smooth_values(col)
    except KeyError:
        return None


def write_fit_report(outdir, fit, data, config, results_extra=None, log_events=()):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = _curve_rows(fit, data)
    paths.append(outdir / "curves.csv")
    write_delimited(
        paths[-1], ["covariate", "x", "fhat", "se", "fbar", "interval"], rows
    )
    paths.append(outdir / "coefficients.csv")
    write_delimited(paths[-1], ["name", "estimate", "se"], fit.coefficient_table())
    from .selection import bic_value

    results = {
        "n": fit.n,
        "family": fit.family.name,
        "converged": fit.converged,
        "edf": fit.edf,
        "phi": fit.phi,
        "dispersion": fit.dispersion,
        "log_likelihood": fit.log_lik,
        "deviance": fit.deviance,
        "bic": bic_value(fit.phi, fit.log_lik, fit.n),
        "lambdas": fit.lambdas,
        "n_outer": fit.n_outer,
        "warnings": list(fit.warnings),
    }
    if results_extra:
        results.update(results_extra)
    paths.append(write_run_json(outdir, config.get("command", "fit"), config,
                                results, log_events))
    paths.append(
        _write_summary(
            outdir,
            [
                f"gamcut {config.get('command', 'fit')}",
                f"n = {fit.n}, family = {fit.family.name}",
                f"effective dimension = {fit.phi:.4f}",
                f"log-likelihood = {fit.log_lik:.6f}",
                f"BIC = {results['bic']:.6f}",
                "lambdas: "
                + ", ".join(f"{k}={v:.6g}" for k, v in fit.lambdas.items()),
            ],
        )
    )
    return paths


def write_categorized_report(outdir, model, gam, data, config, results_extra=None,
                             log_events=()):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    model.source_gam = gam
    paths = []
    cuts_by_col = {cv.covariate: cv.cuts for cv in model.cuts}
    rows = _curve_rows(gam, data, cuts_by_col)
    paths.append(outdir / "curves.csv")
    write_delimited(
        paths[-1], ["covariate", "x", "fhat", "se", "fbar", "interval"], rows
    )
    paths.append(outdir / "cuts.csv")
    write_delimited(
        paths[-1],
        ["covariate", "index", "cut"],
        [
            (cv.covariate, s + 1, float(c))
            for cv in model.cuts
            for s, c in enumerate(cv.cuts)
        ],
    )
    paths.append(outdir / "categories.csv")
    write_delimited(
        paths[-1],
        ["covariate", "interval", "lower", "upper", "count", "mean_fhat",
         "coefficient", "se"],
        _category_rows(model, data),
    )
    paths.append(outdir / "coefficients.csv")
    write_delimited(
        paths[-1], ["name", "estimate", "se"], model.fit.coefficient_table()
    )
    paths.append(outdir / "gate.csv")
    write_delimited(
        paths[-1],
        ["covariate", "lower", "upper", "difference", "se", "z", "p_value"],
        [
            (g.covariate, g.lower, g.upper, g.estimate, g.se, g.z, g.p_value)
            for g in model.gate_pairs
        ],
    )
    results = {
        "n": model.n,
        "family": model.fit.family.name,
        "cuts": {cv.covariate: list(cv.cuts) for cv in model.cuts},
        "k_total": model.k_total,
        "bic": model.bic,
        "pseudo_bic": model.pseudo_bic,
        "gate_passed": model.gate_passed,
        "admissible": model.admissible,
        "phi": model.fit.phi,
        "log_likelihood": model.fit.log_lik,
    }
    if results_extra:
        results.update(results_extra)
    paths.append(write_run_json(outdir, config.get("command", "categorize"),
                                config, results, log_events))
    lines = [
        f"gamcut {config.get('command', 'categorize')}",
        f"n = {model.n}, family = {model.fit.family.name}",
        "cuts: "
        + "; ".join(
            f"{cv.covariate}: "
            + ", ".join(f"{c:.6g}" for c in cv.cuts)
            for cv in model.cuts
        ),
        f"BIC = {model.bic:.6f}, pseudo-BIC = {model.pseudo_bic:.6f}",
        f"significance gate: {'passed' if model.gate_passed else 'failed'}",
        f"admissible: {model.admissible}",
    ]
    paths.append(_write_summary(outdir, lines))
    return paths


def write_select_report(outdir, selection, data, config, log_events=()):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    targets = list(selection.targets)
    grid_rows = []
    for rec in selection.grid:
        cuts_text = ""
        if rec.cuts:
            cuts_text = "|".join(
                cv.covariate + ":" + ";".join(repr(float(c)) for c in cv.cuts)
                for cv in rec.cuts
            )
        grid_rows.append(
            tuple(rec.k_per_target)
            + (
                rec.bic,
                rec.pseudo_bic,
                int(rec.admissible),
                "" if rec.gate_passed is None else int(rec.gate_passed),
                "" if rec.converged is None else int(rec.converged),
                rec.reason,
                cuts_text,
            )
        )
    paths.append(outdir / "grid.csv")
    write_delimited(
        paths[-1],
        [f"k_{c}" for c in targets]
        + ["bic", "pseudo_bic", "admissible", "gate_passed", "converged",
           "reason", "cuts"],
        grid_rows,
    )
    results = {
        "targets": targets,
        "selected": list(selection.selected) if selection.selected else None,
        "no_admissible": selection.no_admissible,
        "reason": selection.reason,
        "gam_bic": selection.gam_bic,
        "descent_violations": selection.descent_violations,
    }
    if selection.selected is not None:
        results["cuts"] = {cv.covariate: list(cv.cuts) for cv in selection.cuts}
        model = selection.selected_model
        sub = write_categorized_report(
            outdir, model, selection.gam, data, config,
            results_extra={"selected": list(selection.selected)},
            log_events=log_events,
        )
        paths.extend(p for p in sub if p.name not in ("run.json", "summary.txt"))
        results["bic"] = model.bic
        results["pseudo_bic"] = model.pseudo_bic
    else:
        rows = _curve_rows(selection.gam, data)
        paths.append(outdir / "curves.csv")
        write_delimited(
            paths[-1], ["covariate", "x", "fhat", "se", "fbar", "interval"], rows
        )
    paths.append(write_run_json(outdir, "select", config, results, log_events))
    if selection.selected is None:
        lines = [
            "gamcut select",
            "no admissible categorization "
            "(every candidate failed the significance gate or did not fit)",
            f"GAM BIC (no categorization) = {selection.gam_bic:.6f}",
        ]
    else:
        lines = [
            "gamcut select",
            "selected nc: "
            + ", ".join(f"{c}={k}" for c, k in zip(targets, selection.selected)),
            "cuts: "
            + "; ".join(
                f"{cv.covariate}: " + ", ".join(f"{c:.6g}" for c in cv.cuts)
                for cv in selection.cuts
            ),
            f"pseudo-BIC = {selection.selected_model.pseudo_bic:.6f}",
            f"GAM BIC (no categorization, diagnostic) = {selection.gam_bic:.6f}",
        ]
    paths.append(_write_summary(outdir, lines))
    return paths


def _cuts_text(cuts_dict) -> str:
    if not cuts_dict:
        return ""
    return "|".join(
        f"{col}:" + ";".join(repr(float(c)) for c in cuts)
        for col, cuts in cuts_dict.items()
    )


def write_simulate_report(outdir, report, config, log_events=()):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = []
    rep_rows = []
    for row in report.rows:
        rep_rows.append(
            (
                row["replicate"],
                int(row["ok"]),
                row["error"],
                row["descent_violations"],
                _cuts_text(row["fixed_cuts"]),
                row["fixed_mse"],
                "" if row["selected_nc"] is None
                else ",".join(str(v) for v in row["selected_nc"]),
                _cuts_text(row["selected_cuts"]),
                row["selected_mse"],
                int(row["no_admissible"]),
            )
        )
    paths.append(outdir / "replicates.csv")
    write_delimited(
        paths[-1],
        ["replicate", "ok", "error", "descent_violations", "fixed_cuts",
         "fixed_mse", "selected_nc", "selected_cuts", "selected_mse",
         "no_admissible"],
        rep_rows,
    )
    if report.selected_counts or report.k_mode in ("selected", "both"):
        table = [
            (",".join(str(v) for v in combo), count, count / report.R)
            for combo, count in report.selected_counts.items()
        ]
        table.append(("none-admissible", report.no_admissible_count,
                      report.no_admissible_count / report.R))
        paths.append(outdir / "selection_table.csv")
        write_delimited(paths[-1], ["nc", "count", "frequency"], table)
    mse_rows = []
    if report.fixed_mse_mean is not None:
        mse_rows.append(("fixed-at-truth", report.fixed_mse_mean,
                         report.fixed_mse_median, report.fixed_n_used))
    if report.selected_mse_mean is not None:
        mse_rows.append(("selected", report.selected_mse_mean, None,
                         report.selected_n_matching))
    if mse_rows:
        paths.append(outdir / "mse_summary.csv")
        write_delimited(paths[-1], ["mode", "mean_mse", "median_mse", "n_used"],
                        mse_rows)
    bias_rows = []
    for mode, table in (("fixed-at-truth", report.fixed_bias),
                        ("selected", report.selected_bias)):
        for col, biases in table.items():
            for s, b in enumerate(biases):
                bias_rows.append((mode, col, s + 1, float(b)))
    if bias_rows:
        paths.append(outdir / "bias.csv")
        write_delimited(paths[-1], ["mode", "covariate", "cut_index", "bias"],
                        bias_rows)
    results = {
        "scenario": report.scenario,
        "n": report.n,
        "R": report.R,
        "seed": report.seed,
        "k_mode": report.k_mode,
        "true_k": list(report.true_k),
        "true_cuts": {k: list(v) for k, v in report.true_cuts.items()},
        "n_failures": report.n_failures,
        "descent_violations": report.descent_violations,
        "fixed_mse_mean": report.fixed_mse_mean,
        "fixed_mse_median": report.fixed_mse_median,
        "selected_counts": {
            ",".join(str(v) for v in k): c for k, c in report.selected_counts.items()
        },
        "no_admissible_count": report.no_admissible_count,
        "selected_mse_mean": report.selected_mse_mean,
        "selected_n_matching": report.selected_n_matching,
    }
    paths.append(write_run_json(outdir, "simulate", config, results, log_events))
    lines = [
        "gamcut simulate",
        f"scenario {report.scenario}, n = {report.n}, R = {report.R}, "
        f"seed = {report.seed}, mode = {report.k_mode}",
        f"failures: {report.n_failures}, descent violations: "
        f"{report.descent_violations}",
    ]
    if report.fixed_mse_mean is not None:
        lines.append(
            f"fixed-at-truth mean MSE = {report.fixed_mse_mean:.6f} "
            f"(median {report.fixed_mse_median:.6f}, n = {report.fixed_n_used})"
        )
    if report.selected_counts:
        top = max(report.selected_counts.items(), key=lambda kv: kv[1])
        lines.append(
            "selection: "
            + "; ".join(
                f"nc=({','.join(str(v) for v in k)}): {c}/{report.R}"
                for k, c in report.selected_counts.items()
            )
        )
        lines.append(
            f"modal selection nc=({','.join(str(v) for v in top[0])}) "
            f"at {top[1] / report.R:.1%}"
        )
    paths.append(_write_summary(outdir, lines))
    return paths
