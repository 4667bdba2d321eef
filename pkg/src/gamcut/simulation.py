"""Monte-Carlo study harness: scenario generators, replicate execution and
bias / MSE / selection-frequency aggregation."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .cutpoints import optimize_cuts
from .data import Dataset
from .errors import GamcutError
from .gam import LinearTerm, ModelSpec, SmoothTerm, fit_gam
from .selection import select_num_cuts

logger = logging.getLogger(__name__)

TWO_THIRDS = 2.0 / 3.0


@dataclass(frozen=True)
class StepFunction:
    """Piecewise-constant function with left-open/right-closed intervals."""

    levels: tuple
    cuts: tuple

    def __post_init__(self):
        if len(self.levels) != len(self.cuts) + 1:
            raise ValueError("need exactly one more level than cuts")
        if len(self.cuts) > 1 and not np.all(np.diff(np.asarray(self.cuts)) > 0):
            raise ValueError("cuts must be strictly increasing")

    def __call__(self, x):
        idx = np.searchsorted(np.asarray(self.cuts), np.asarray(x, dtype=float),
                              side="left")
        return np.asarray(self.levels, dtype=float)[idx]

    @property
    def k(self) -> int:
        return len(self.cuts)


@dataclass(frozen=True)
class ScenarioCovariate:
    column: str
    low: float
    high: float
    step: StepFunction | None = None
    linear_coef: float | None = None


@dataclass(frozen=True)
class ScenarioSpec:
    """Data-generating definition for one simulation scenario."""

    name: str
    family: str
    intercept: float
    covariates: tuple
    exposure_range: tuple | None = None
    offset_column: str | None = None
    response: str = "y"

    @property
    def target_columns(self) -> tuple:
        return tuple(c.column for c in self.covariates if c.step is not None)

    @property
    def true_k(self) -> tuple:
        return tuple(c.step.k for c in self.covariates if c.step is not None)

    def true_cuts(self) -> dict:
        return {c.column: c.step.cuts for c in self.covariates if c.step is not None}

    def flat_true_cuts(self) -> np.ndarray:
        return np.concatenate(
            [np.asarray(c.step.cuts) for c in self.covariates if c.step is not None]
        )


# Step levels for the binomial scenarios; the theoretical cut-off points are
# equidistant in [-2, 2] leaving aside the extremes, so k=2 uses +-2/3 exactly.
_F1 = {
    2: StepFunction(levels=(1.5, 0.0, 1.5), cuts=(-TWO_THIRDS, TWO_THIRDS)),
    3: StepFunction(levels=(1.5, 0.0, 1.5, 3.0), cuts=(-1.0, 0.0, 1.0)),
}
_F2 = {
    1: StepFunction(levels=(-2.0, 0.0), cuts=(0.0,)),
    2: StepFunction(levels=(-2.0, 0.0, 2.0), cuts=(-TWO_THIRDS, TWO_THIRDS)),
}


def _binomial_scenario(name, k1, k2):
    return ScenarioSpec(
        name=name,
        family="binomial",
        intercept=0.0,
        covariates=(
            ScenarioCovariate("x1", -2.0, 2.0, step=_F1[k1]),
            ScenarioCovariate("x2", -2.0, 2.0, step=_F2[k2]),
            ScenarioCovariate("x3", -1.0, 1.0, linear_coef=0.1),
        ),
    )


SCENARIOS = {
    "S1": _binomial_scenario("S1", 2, 1),
    "S2": _binomial_scenario("S2", 2, 2),
    "S3": _binomial_scenario("S3", 3, 1),
    "S4": _binomial_scenario("S4", 3, 2),
    # Poisson rate demo: two step covariates and a log-exposure offset.
    "P1": ScenarioSpec(
        name="P1",
        family="poisson",
        intercept=np.log(0.4),
        covariates=(
            ScenarioCovariate(
                "x1", -2.0, 2.0,
                step=StepFunction(levels=(1.0, 0.0, 1.0), cuts=(-TWO_THIRDS, TWO_THIRDS)),
            ),
            ScenarioCovariate(
                "x2", -2.0, 2.0,
                step=StepFunction(levels=(-1.0, 0.0), cuts=(0.0,)),
            ),
        ),
        exposure_range=(1.0, 10.0),
        offset_column="log_exposure",
    ),
}


def scenario(name: str) -> ScenarioSpec:
    try:
        return SCENARIOS[name.upper()]
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}"
        ) from None


def replicate_seed(seed: int, r: int) -> np.random.SeedSequence:
    """Counter-based sub-seed so replicate r is independently re-runnable."""
    return np.random.SeedSequence(entropy=seed, spawn_key=(r,))


def generate_scenario(spec: ScenarioSpec, n: int, seed) -> Dataset:
    """Draw one sample from the scenario's data-generating process."""
    if isinstance(spec, str):
        spec = scenario(spec)
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    columns = {}
    eta = np.full(n, spec.intercept)
    for cov in spec.covariates:
        x = rng.uniform(cov.low, cov.high, n)
        columns[cov.column] = x
        if cov.step is not None:
            eta = eta + cov.step(x)
        if cov.linear_coef is not None:
            eta = eta + cov.linear_coef * x
    if spec.exposure_range is not None:
        t = rng.uniform(*spec.exposure_range, n)
        columns[spec.offset_column] = np.log(t)
        eta = eta + np.log(t)
    if spec.family == "binomial":
        y = rng.binomial(1, expit(eta)).astype(float)
    elif spec.family == "poisson":
        y = rng.poisson(np.exp(eta)).astype(float)
    else:
        raise ValueError(f"scenario family {spec.family!r} not supported")
    return Dataset(columns={spec.response: y, **columns})


def model_spec_for(spec: ScenarioSpec) -> ModelSpec:
    """Analysis model used on scenario data: smooths for the step covariates,
    linear terms for the rest."""
    terms = []
    for cov in spec.covariates:
        if cov.step is not None:
            terms.append(SmoothTerm(cov.column))
        else:
            terms.append(LinearTerm(cov.column))
    return ModelSpec(
        response=spec.response,
        family=spec.family,
        terms=tuple(terms),
        targets=spec.target_columns,
        offset=spec.offset_column,
    )


def mse_of_replicate(estimated, theoretical) -> float:
    """Average squared deviation of estimated from theoretical cut-off points
    (flattened over covariates)."""
    est = np.asarray(estimated, dtype=float).ravel()
    th = np.asarray(theoretical, dtype=float).ravel()
    if est.shape != th.shape:
        raise ValueError(
            f"estimated cuts have length {est.size}, theoretical {th.size}"
        )
    return float(np.mean((est - th) ** 2))


K_MODES = ("fixed-at-truth", "selected", "both")


def _run_one(args):
    (spec, n, seed, r, k_mode, k_max, alpha, min_bin) = args
    row = {
        "replicate": r,
        "ok": True,
        "error": "",
        "descent_violations": 0,
        "fixed_cuts": None,
        "fixed_mse": None,
        "selected_nc": None,
        "selected_cuts": None,
        "selected_mse": None,
        "no_admissible": False,
    }
    try:
        data = generate_scenario(spec, n, replicate_seed(seed, r))
        model_spec = model_spec_for(spec)
        gam = fit_gam(data, model_spec)
        if k_mode in ("fixed-at-truth", "both"):
            est = {}
            for cov in spec.covariates:
                if cov.step is None:
                    continue
                res = optimize_cuts(
                    gam.smooth_values(cov.column),
                    gam.smooth_se(cov.column),
                    data.column(cov.column),
                    cov.step.k,
                    min_bin=min_bin,
                    covariate=cov.column,
                )
                row["descent_violations"] += res.descent_violations
                est[cov.column] = res.cuts.cuts
            row["fixed_cuts"] = est
            flat = np.concatenate([np.asarray(est[c]) for c in spec.target_columns])
            row["fixed_mse"] = mse_of_replicate(flat, spec.flat_true_cuts())
        if k_mode in ("selected", "both"):
            sel = select_num_cuts(
                data, model_spec, k_max=k_max, alpha=alpha, min_bin=min_bin, gam=gam
            )
            row["descent_violations"] += sel.descent_violations
            if sel.no_admissible:
                row["no_admissible"] = True
            else:
                row["selected_nc"] = sel.selected
                row["selected_cuts"] = {
                    cv.covariate: cv.cuts for cv in sel.cuts
                }
                if sel.selected == spec.true_k:
                    flat = np.concatenate(
                        [np.asarray(row["selected_cuts"][c]) for c in spec.target_columns]
                    )
                    row["selected_mse"] = mse_of_replicate(flat, spec.flat_true_cuts())
    except (GamcutError, ValueError, np.linalg.LinAlgError) as exc:
        row["ok"] = False
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


@dataclass
class ReplicateReport:
    """Per-replicate results and their aggregates for one scenario run."""

    scenario: str
    n: int
    R: int
    seed: int
    k_mode: str
    k_max: int
    alpha: float
    true_cuts: dict
    true_k: tuple
    rows: list
    n_failures: int = 0
    descent_violations: int = 0
    fixed_mse_mean: float | None = None
    fixed_mse_median: float | None = None
    fixed_bias: dict = field(default_factory=dict)
    fixed_n_used: int = 0
    selected_counts: dict = field(default_factory=dict)
    selected_mse_mean: float | None = None
    selected_bias: dict = field(default_factory=dict)
    selected_n_matching: int = 0
    no_admissible_count: int = 0

    def selection_frequency(self, nc) -> float:
        """Fraction of replicates (out of R) selecting the combination nc."""
        return self.selected_counts.get(tuple(nc), 0) / self.R


def _bias_table(rows, key, spec: ScenarioSpec) -> dict:
    bias = {}
    for cov in spec.covariates:
        if cov.step is None:
            continue
        col = cov.column
        ests = [r[key][col] for r in rows if r[key] is not None and col in r[key]]
        if not ests:
            continue
        arr = np.asarray(ests, dtype=float)
        bias[col] = tuple(arr.mean(axis=0) - np.asarray(cov.step.cuts))
    return bias


def run_replicates(
    spec,
    n: int,
    R: int,
    seed: int,
    k_mode: str = "selected",
    k_max: int = 4,
    alpha: float = 0.05,
    min_bin=None,
    threads: int = 1,
) -> ReplicateReport:
    """Run the full pipeline on R independently seeded samples.

    Failures of individual replicates are recorded, not raised.  The report is
    identical for the same seed regardless of ``threads``.
    """
    if isinstance(spec, str):
        spec = scenario(spec)
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    if k_mode not in K_MODES:
        raise ValueError(f"k_mode must be one of {K_MODES}, got {k_mode!r}")
    args = [(spec, n, seed, r, k_mode, k_max, alpha, min_bin) for r in range(R)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_one, args))
    else:
        rows = [_run_one(a) for a in args]
    rows.sort(key=lambda r: r["replicate"])

    report = ReplicateReport(
        scenario=spec.name,
        n=n,
        R=R,
        seed=seed,
        k_mode=k_mode,
        k_max=k_max,
        alpha=alpha,
        true_cuts=spec.true_cuts(),
        true_k=spec.true_k,
        rows=rows,
        n_failures=sum(1 for r in rows if not r["ok"]),
        descent_violations=sum(r["descent_violations"] for r in rows),
    )
    fixed_mses = [r["fixed_mse"] for r in rows if r["fixed_mse"] is not None]
    if fixed_mses:
        report.fixed_mse_mean = float(np.mean(fixed_mses))
        report.fixed_mse_median = float(np.median(fixed_mses))
        report.fixed_bias = _bias_table(rows, "fixed_cuts", spec)
        report.fixed_n_used = len(fixed_mses)
    if k_mode in ("selected", "both"):
        counts = {}
        for r in rows:
            if r["selected_nc"] is not None:
                key = tuple(r["selected_nc"])
                counts[key] = counts.get(key, 0) + 1
        report.selected_counts = dict(sorted(counts.items()))
        report.no_admissible_count = sum(1 for r in rows if r["no_admissible"])
        matching = [r["selected_mse"] for r in rows if r["selected_mse"] is not None]
        if matching:
            report.selected_mse_mean = float(np.mean(matching))
            report.selected_n_matching = len(matching)
            report.selected_bias = _bias_table(
                [r for r in rows if r["selected_mse"] is not None],
                "selected_cuts",
                spec,
            )
    if report.n_failures:
        logger.warning(
            "%s n=%d: %d of %d replicates failed", spec.name, n, report.n_failures, R
        )
    return report
