"""Command-line interface: fit, categorize, select, simulate and report."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__, plots, report
from .basis import BasisSpec
from .cutpoints import optimize_cuts
from .data import read_delimited
from .errors import DataError, GamcutError
from .gam import LinearTerm, ModelSpec, SmoothTerm, fit_gam
from .selection import fit_categorized, select_num_cuts
from .simulation import K_MODES, SCENARIOS, run_replicates

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Fully resolved configuration of one CLI invocation."""

    command: str
    input: str | None = None
    sep: str = ","
    response: str | None = None
    family: str | None = None
    offset: str | None = None
    targets: list = field(default_factory=list)
    smooth: list = field(default_factory=list)
    linear: list = field(default_factory=list)
    k: int | None = None
    k_max: int = 4
    alpha: float = 0.05
    seed: int = 0
    out: str | None = None
    scenario: str | None = None
    n: int | None = None
    R: int | None = None
    k_mode: str = "selected"
    threads: int = 1
    knots: int = 20
    degree: int = 3
    penalty_order: int = 2
    run: str | None = None

    @classmethod
    def resolve(cls, command: str, args, file_cfg: dict) -> "RunConfig":
        """Flags win over config-file values, which win over defaults."""
        unknown = set(file_cfg) - {f.name for f in dataclasses.fields(cls)} - {"command"}
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = {"command": command}
        for f in dataclasses.fields(cls):
            if f.name == "command":
                continue
            value = getattr(args, f.name, None)
            if value is None and f.name in file_cfg:
                value = file_cfg[f.name]
            if value is not None:
                kwargs[f.name] = value
        cfg = cls(**kwargs)
        if cfg.out is None and command != "report":
            cfg.out = "gamcut_out"
        if not 0.0 < cfg.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {cfg.alpha}")
        if cfg.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {cfg.k_max}")
        if cfg.threads < 1:
            raise ValueError(f"threads must be >= 1, got {cfg.threads}")
        return cfg

    def echo(self) -> dict:
        return dataclasses.asdict(self)


def _parse_target(text: str):
    """'col' or 'col:k' -> (col, k or None)."""
    col, _, suffix = text.partition(":")
    if not col:
        raise ValueError(f"empty target column in {text!r}")
    if suffix:
        k = int(suffix)
        if k < 1:
            raise ValueError(f"per-target k must be >= 1 in {text!r}")
        return col, k
    return col, None


def _model_spec(cfg: RunConfig) -> ModelSpec:
    if not cfg.response:
        raise ValueError("--response is required")
    if not cfg.family:
        raise ValueError("--family is required")
    if not cfg.targets and not cfg.smooth and not cfg.linear:
        raise ValueError("give at least one --target/--smooth/--linear column")
    basis = BasisSpec(
        num_interior_knots=cfg.knots,
        degree=cfg.degree,
        penalty_order=cfg.penalty_order,
    )
    terms = []
    target_cols = []
    for text in cfg.targets:
        col, _ = _parse_target(str(text))
        target_cols.append(col)
        terms.append(SmoothTerm(col, basis=basis))
    for col in cfg.smooth:
        terms.append(SmoothTerm(col, basis=basis))
    for col in cfg.linear:
        terms.append(LinearTerm(col))
    return ModelSpec(
        response=cfg.response,
        family=cfg.family,
        terms=tuple(terms),
        targets=tuple(target_cols),
        offset=cfg.offset,
    )


def _load_data(cfg: RunConfig):
    if not cfg.input:
        raise ValueError("--input is required")
    data = read_delimited(cfg.input, sep=cfg.sep)
    events = []
    if data.excluded_rows:
        events.append(
            {"event": "rows_excluded_missing_values", "count": data.excluded_rows}
        )
    return data, events


def _per_target_k(cfg: RunConfig, fallback) -> dict:
    out = {}
    for text in cfg.targets:
        col, k = _parse_target(str(text))
        out[col] = k if k is not None else fallback
    return out


def _cmd_fit(cfg: RunConfig) -> int:
    data, events = _load_data(cfg)
    spec = _model_spec(cfg)
    fit = fit_gam(data, spec)
    report.write_fit_report(cfg.out, fit, data, cfg.echo(), log_events=events)
    print(
        f"fit: n={fit.n} family={fit.family.name} phi={fit.phi:.3f} "
        f"logL={fit.log_lik:.3f} -> {cfg.out}"
    )
    return 0


def _cmd_categorize(cfg: RunConfig) -> int:
    data, events = _load_data(cfg)
    spec = _model_spec(cfg)
    ks = _per_target_k(cfg, cfg.k)
    missing = [c for c, k in ks.items() if k is None]
    if missing:
        raise ValueError(
            f"no cut count for {missing}; pass --k or --target col:k"
        )
    gam = fit_gam(data, spec)
    cuts = []
    wmse_by_col = {}
    for col, k in ks.items():
        res = optimize_cuts(
            gam.smooth_values(col), gam.smooth_se(col), data.column(col), k,
            covariate=col,
        )
        cuts.append(res.cuts)
        wmse_by_col[col] = res.wmse
        if not res.converged:
            events.append({"event": "cut_search_not_converged", "covariate": col})
    model = fit_categorized(data, spec, cuts, alpha=cfg.alpha)
    report.write_categorized_report(
        cfg.out, model, gam, data, cfg.echo(),
        results_extra={"wmse": wmse_by_col}, log_events=events,
    )
    cuts_text = "; ".join(
        f"{cv.covariate}: " + ", ".join(f"{c:.6g}" for c in cv.cuts) for cv in cuts
    )
    print(
        f"categorize: {cuts_text} | pseudo-BIC={model.pseudo_bic:.3f} "
        f"admissible={model.admissible} -> {cfg.out}"
    )
    return 0


def _cmd_select(cfg: RunConfig) -> int:
    data, events = _load_data(cfg)
    spec = _model_spec(cfg)
    k_max = _per_target_k(cfg, cfg.k_max)
    sel = select_num_cuts(data, spec, k_max=k_max, alpha=cfg.alpha)
    report.write_select_report(cfg.out, sel, data, cfg.echo(), log_events=events)
    if sel.selected is None:
        print(f"select: no admissible categorization -> {cfg.out}")
    else:
        nc = ", ".join(
            f"{c}={k}" for c, k in zip(sel.targets, sel.selected)
        )
        print(f"select: nc {nc} -> {cfg.out}")
    return 0


def _cmd_simulate(cfg: RunConfig) -> int:
    if not cfg.scenario:
        raise ValueError(f"--scenario is required (one of {sorted(SCENARIOS)})")
    if not cfg.n or not cfg.R:
        raise ValueError("--n and --R are required")
    rep = run_replicates(
        cfg.scenario, cfg.n, cfg.R, cfg.seed, k_mode=cfg.k_mode, k_max=cfg.k_max,
        alpha=cfg.alpha, threads=cfg.threads,
    )
    report.write_simulate_report(cfg.out, rep, cfg.echo())
    bits = [f"simulate {rep.scenario}: n={rep.n} R={rep.R} failures={rep.n_failures}"]
    if rep.fixed_mse_mean is not None:
        bits.append(f"mean MSE={rep.fixed_mse_mean:.5f}")
    if rep.selected_counts:
        top = max(rep.selected_counts.items(), key=lambda kv: kv[1])
        bits.append(
            f"modal nc=({','.join(str(v) for v in top[0])}) {top[1]}/{rep.R}"
        )
    print(" | ".join(bits) + f" -> {cfg.out}")
    return 0


def _cmd_report(cfg: RunConfig) -> int:
    if not cfg.run:
        raise ValueError("--run is required")
    paths = plots.render_run(cfg.run, cfg.out)
    where = Path(paths[0]).parent if paths else (cfg.out or cfg.run)
    print(f"report: rendered {len(paths)} figures -> {where}")
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "categorize": _cmd_categorize,
    "select": _cmd_select,
    "simulate": _cmd_simulate,
    "report": _cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gamcut",
        description=(
            "Estimate optimal cut-off points for categorizing continuous "
            "predictors in exponential-family regression models."
        ),
    )
    parser.add_argument("--version", action="version", version=f"gamcut {__version__}")
    sub = parser.add_subparsers(dest="command")

    def add_common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--out", help="output directory (default gamcut_out)")
        p.add_argument("--seed", type=int, help="random seed (default 0)")
        p.add_argument("--threads", type=int, help="worker processes (default 1)")

    def add_data(p):
        p.add_argument("--input", help="delimited text file with a header row")
        p.add_argument("--sep", help="field separator (default ',', use '\\t' for tabs)")
        p.add_argument("--response", help="response column")
        p.add_argument(
            "--family", choices=["gaussian", "binomial", "poisson"],
            help="response distribution",
        )
        p.add_argument("--offset", help="offset column (link scale), e.g. log exposure")
        p.add_argument(
            "--target", dest="targets", action="append", metavar="COL[:K]",
            help="covariate to categorize (repeatable); ':K' fixes k or caps k_max",
        )
        p.add_argument(
            "--smooth", action="append", metavar="COL",
            help="additional smooth adjustment covariate (repeatable)",
        )
        p.add_argument(
            "--linear", action="append", metavar="COL",
            help="linear adjustment covariate (repeatable)",
        )
        p.add_argument("--alpha", type=float,
                       help="significance level of the category gate (default 0.05)")
        p.add_argument("--knots", type=int,
                       help="interior knots per smooth (default 20)")
        p.add_argument("--degree", type=int, help="spline degree (default 3)")
        p.add_argument("--penalty-order", dest="penalty_order", type=int,
                       help="difference-penalty order (default 2)")

    p = sub.add_parser("fit", help="fit the smooth additive model and export curves")
    add_common(p)
    add_data(p)

    p = sub.add_parser("categorize",
                       help="optimal cut locations for a fixed number of cuts")
    add_common(p)
    add_data(p)
    p.add_argument("--k", type=int, help="number of cut-off points per target")

    p = sub.add_parser("select", help="select the number of cut-off points by pseudo-BIC")
    add_common(p)
    add_data(p)
    p.add_argument("--k-max", dest="k_max", type=int,
                   help="largest cut count per target (default 4)")

    p = sub.add_parser("simulate", help="run the Monte-Carlo study harness")
    add_common(p)
    p.add_argument("--scenario", choices=sorted(SCENARIOS), help="scenario id")
    p.add_argument("--n", type=int, help="sample size per replicate")
    p.add_argument("--R", type=int, help="number of replicates")
    p.add_argument("--k-mode", dest="k_mode", choices=list(K_MODES),
                   help="fixed-at-truth, selected, or both (default selected)")
    p.add_argument("--k-max", dest="k_max", type=int,
                   help="largest cut count per target (default 4)")
    p.add_argument("--alpha", type=float,
                   help="significance level of the category gate (default 0.05)")

    p = sub.add_parser("report", help="render figures for a previous run")
    add_common(p)
    p.add_argument("--run", help="directory holding a previous run's output")

    return parser


def _setup_logging() -> None:
    level = {"0": logging.WARNING, "1": logging.INFO, "2": logging.DEBUG}.get(
        os.environ.get("GAMCUT_VERBOSITY", "0"), logging.WARNING
    )
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    if not args.command:
        parser.print_help()
        return 2
    try:
        file_cfg = {}
        if getattr(args, "config", None):
            file_cfg = json.loads(Path(args.config).read_text())
        cfg = RunConfig.resolve(args.command, args, file_cfg)
        return _COMMANDS[cfg.command](cfg)
    except (GamcutError, ValueError, OSError, json.JSONDecodeError) as exc:
        error = {
            "error": type(exc).__name__,
            "message": str(exc),
            "command": args.command,
        }
        if isinstance(exc, DataError):
            error["row"] = exc.row
            error["column"] = exc.column
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
