"""Categorized refits, BIC / pseudo-BIC and selection of the number of
cut-off points per covariate."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .cutpoints import CutVector, OptimizedCuts, optimize_cuts
from .errors import (
    ConvergenceError,
    EmptyCategoryError,
    GamcutError,
    InfeasibleCutsError,
    RankDeficiencyError,
)
from .gam import FittedGAM, ModelSpec, SmoothTerm, StepTerm, fit_gam, _column

logger = logging.getLogger(__name__)


def bic_value(phi: float, log_lik: float, n: int) -> float:
    """phi * log(n) - 2 * log-likelihood."""
    return phi * math.log(n) - 2.0 * log_lik


def pseudo_bic_value(bic: float, n: int, k_total: int) -> float:
    """BIC plus log(n) for every estimated cut-off point."""
    return bic + math.log(n) * k_total


@dataclass(frozen=True)
class GatePair:
    """Wald comparison of two consecutive categories of one covariate."""

    covariate: str
    lower: int
    upper: int
    estimate: float
    se: float
    z: float
    p_value: float


@dataclass
class CategorizedModel:
    """Refit of the model with target smooths replaced by interval dummies."""

    cuts: tuple[CutVector, ...]
    fit: FittedGAM
    n: int
    k_total: int
    bic: float
    pseudo_bic: float
    gate_passed: bool
    gate_pairs: list
    admissible: bool

    def coefficients_for(self, covariate: str):
        """(beta, covariance) of the dummy block for one categorized covariate."""
        block = self.fit.block_for(covariate)
        return self.fit.coef[block.sl], self.fit.cov[block.sl, block.sl]


def adjacent_significance_detail(model: CategorizedModel, alpha: float = 0.05):
    """Wald tests of all consecutive-category contrasts.

    Returns (passed, pairs).  The reference category has coefficient zero by
    construction, so the first contrast tests the first dummy coefficient
    directly.  A singular covariance makes the gate fail.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    pairs = []
    passed = True
    for cv in model.cuts:
        if cv.k == 0:
            continue
        beta, cov = model.coefficients_for(cv.covariate)
        for s in range(cv.k):
            if s == 0:
                diff = beta[0]
                var = cov[0, 0]
            else:
                diff = beta[s] - beta[s - 1]
                var = cov[s, s] + cov[s - 1, s - 1] - 2.0 * cov[s, s - 1]
            if not np.isfinite(var) or var <= 0.0:
                pairs.append(
                    GatePair(cv.covariate, s, s + 1, float(diff), float("nan"),
                             float("nan"), float("nan"))
                )
                passed = False
                continue
            se = math.sqrt(var)
            z = diff / se
            p = 2.0 * norm.sf(abs(z))
            pairs.append(
                GatePair(cv.covariate, s, s + 1, float(diff), se, float(z), float(p))
            )
            if not p < alpha:
                passed = False
    return passed, pairs


def adjacent_significance(model: CategorizedModel, alpha: float = 0.05) -> bool:
    """True iff every pair of consecutive categories differs significantly."""
    passed, _ = adjacent_significance_detail(model, alpha)
    return passed


def fit_categorized(
    data, spec: ModelSpec, cuts, alpha: float = 0.05
) -> CategorizedModel:
    """Refit the model with each target's smooth replaced by interval
    indicator columns for its cut vector (empty cut vectors drop the
    covariate); remaining smooths are re-estimated."""
    cuts = tuple(cuts)
    by_col = {cv.covariate: cv for cv in cuts}
    unknown = set(by_col) - {t.column for t in spec.terms}
    if unknown:
        raise ValueError(f"cut vectors for unknown columns: {sorted(unknown)}")
    terms = []
    for term in spec.terms:
        if term.column in by_col:
            if not isinstance(term, SmoothTerm):
                raise ValueError(
                    f"cut vector given for non-smooth term {term.column!r}"
                )
            terms.append(StepTerm(term.column, by_col[term.column].cuts))
        else:
            terms.append(term)
    derived = replace(spec, terms=tuple(terms), targets=())
    fit = fit_gam(data, derived)
    n = fit.n
    k_total = sum(cv.k for cv in cuts)
    bic = bic_value(fit.phi, fit.log_lik, n)
    model = CategorizedModel(
        cuts=cuts,
        fit=fit,
        n=n,
        k_total=k_total,
        bic=bic,
        pseudo_bic=pseudo_bic_value(bic, n, k_total),
        gate_passed=False,
        gate_pairs=[],
        admissible=False,
    )
    model.gate_passed, model.gate_pairs = adjacent_significance_detail(model, alpha)
    model.admissible = bool(fit.converged and model.gate_passed)
    return model


def bic(model: CategorizedModel) -> float:
    return model.bic


def pseudo_bic(model: CategorizedModel) -> float:
    return model.pseudo_bic


@dataclass
class CandidateRecord:
    """One evaluated combination of cut counts."""

    k_per_target: tuple
    cuts: tuple | None
    bic: float | None
    pseudo_bic: float | None
    admissible: bool
    gate_passed: bool | None
    converged: bool | None
    reason: str = ""
    model: CategorizedModel | None = field(default=None, repr=False)


@dataclass
class SelectionResult:
    """Outcome of the pseudo-BIC grid search over cut counts."""

    targets: tuple
    selected: tuple | None
    cuts: tuple | None
    grid: list
    gam: FittedGAM
    gam_bic: float
    descent_violations: int
    optimizer_info: dict
    no_admissible: bool
    reason: str = ""

    @property
    def selected_model(self) -> CategorizedModel | None:
        if self.selected is None:
            return None
        for rec in self.grid:
            if rec.k_per_target == self.selected:
                return rec.model
        return None


def select_num_cuts(
    data,
    spec: ModelSpec,
    k_max=4,
    alpha: float = 0.05,
    min_bin=None,
    max_cycles: int = 50,
    gam: FittedGAM | None = None,
) -> SelectionResult:
    """Choose the number of cut-off points per target covariate.

    The smooth model is fit once; cut locations are optimized per covariate
    for every k in 1..k_max, and every combination is refit as a categorized
    model.  Candidates failing the consecutive-category significance gate (or
    failing to fit) are discarded; among the rest the smallest pseudo-BIC
    wins, with ties broken toward fewer total cuts and then lexicographically.
    """
    if not spec.targets:
        raise ValueError("spec has no categorize targets")
    if isinstance(k_max, int):
        k_max = {c: k_max for c in spec.targets}
    for c in spec.targets:
        if k_max.get(c, 0) < 1:
            raise ValueError(f"k_max for {c!r} must be >= 1")
    if gam is None:
        gam = fit_gam(data, spec)
    gam_bic = bic_value(gam.phi, gam.log_lik, gam.n)

    per_target: dict[str, dict[int, OptimizedCuts | None]] = {}
    optimizer_info: dict[str, dict[int, dict]] = {}
    violations = 0
    for col in spec.targets:
        x = _column(data, col)
        fhat = gam.smooth_values(col)
        sigma = gam.smooth_se(col)
        per_target[col] = {}
        optimizer_info[col] = {}
        for k in range(1, k_max[col] + 1):
            try:
                res = optimize_cuts(
                    fhat, sigma, x, k, min_bin=min_bin,
                    max_cycles=max_cycles, covariate=col,
                )
            except InfeasibleCutsError as exc:
                per_target[col][k] = None
                optimizer_info[col][k] = {"error": str(exc)}
                continue
            violations += res.descent_violations
            per_target[col][k] = res
            optimizer_info[col][k] = {
                "wmse": res.wmse,
                "cycles": res.cycles,
                "converged": res.converged,
                "cuts": res.cuts.cuts,
            }

    grid: list[CandidateRecord] = []
    for combo in itertools.product(
        *[range(1, k_max[c] + 1) for c in spec.targets]
    ):
        picks = [per_target[c][k] for c, k in zip(spec.targets, combo)]
        if any(p is None for p in picks):
            grid.append(
                CandidateRecord(
                    combo, None, None, None, False, None, None,
                    reason="infeasible cut count",
                )
            )
            continue
        cuts = tuple(p.cuts for p in picks)
        try:
            model = fit_categorized(data, spec, cuts, alpha=alpha)
        except (ConvergenceError, EmptyCategoryError, RankDeficiencyError) as exc:
            grid.append(
                CandidateRecord(
                    combo, cuts, None, None, False, None, False,
                    reason=f"{type(exc).__name__}: {exc}",
                )
            )
            continue
        reason = "" if model.admissible else (
            "significance gate failed" if not model.gate_passed else "did not converge"
        )
        grid.append(
            CandidateRecord(
                combo, cuts, model.bic, model.pseudo_bic, model.admissible,
                model.gate_passed, model.fit.converged, reason=reason, model=model,
            )
        )

    admissible = [r for r in grid if r.admissible]
    if not admissible:
        return SelectionResult(
            targets=spec.targets, selected=None, cuts=None, grid=grid, gam=gam,
            gam_bic=gam_bic, descent_violations=violations,
            optimizer_info=optimizer_info, no_admissible=True,
            reason="no admissible categorization",
        )
    best = min(
        admissible, key=lambda r: (r.pseudo_bic, sum(r.k_per_target), r.k_per_target)
    )
    return SelectionResult(
        targets=spec.targets,
        selected=best.k_per_target,
        cuts=best.cuts,
        grid=grid,
        gam=gam,
        gam_bic=gam_bic,
        descent_violations=violations,
        optimizer_info=optimizer_info,
        no_admissible=False,
    )
