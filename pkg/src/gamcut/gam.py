"""Additive-model fitting: penalized IRLS over P-spline blocks plus
parametric terms, with smoothing parameters chosen by generalized
Fellner-Schall multiplier updates."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
import scipy.linalg

from .basis import BasisSpec, build_knots, difference_penalty, evaluate_basis
from .errors import ConvergenceError, EmptyCategoryError
from .families import Family, get_family
from .glm import check_full_rank

logger = logging.getLogger(__name__)

_BETA_LIMIT = 1e3
_SE_FLOOR = 1e-8
LAMBDA_MIN = 1e-7
LAMBDA_MAX = 1e12


@dataclass(frozen=True)
class SmoothTerm:
    """P-spline smooth of one continuous covariate."""

    column: str
    basis: BasisSpec = field(default_factory=BasisSpec)


@dataclass(frozen=True)
class LinearTerm:
    """Covariate entering the linear predictor untransformed."""

    column: str


@dataclass(frozen=True)
class CategoricalTerm:
    """Dummy-coded factor; the smallest observed level is the reference."""

    column: str


@dataclass(frozen=True)
class StepTerm:
    """Indicator columns I{c_s < x <= c_{s+1}} for an ordered cut vector.

    The reference interval [min(x), c_1] contributes no column; an empty cut
    vector contributes no columns at all (the covariate drops out).
    """

    column: str
    cuts: tuple[float, ...]

    def __post_init__(self):
        cuts = tuple(float(c) for c in self.cuts)
        object.__setattr__(self, "cuts", cuts)
        if len(cuts) > 1 and not np.all(np.diff(np.asarray(cuts)) > 0):
            raise ValueError(f"cuts must be strictly increasing, got {cuts}")


Term = Union[SmoothTerm, LinearTerm, CategoricalTerm, StepTerm]


@dataclass(frozen=True)
class ModelSpec:
    """Response, family, offset and one term per covariate."""

    response: str
    family: Union[str, Family]
    terms: tuple[Term, ...] = ()
    targets: tuple[str, ...] = ()
    offset: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        object.__setattr__(self, "targets", tuple(self.targets))
        cols = [t.column for t in self.terms]
        if len(set(cols)) != len(cols):
            raise ValueError(f"duplicate term columns in {cols}")
        if self.response in cols:
            raise ValueError(f"response {self.response!r} also appears as a term")
        smooth_cols = {t.column for t in self.terms if isinstance(t, SmoothTerm)}
        missing = [c for c in self.targets if c not in smooth_cols]
        if missing:
            raise ValueError(
                f"categorize targets must be smooth terms; not smooth: {missing}"
            )

    def term_for(self, column: str) -> Term:
        for t in self.terms:
            if t.column == column:
                return t
        raise KeyError(f"no term for column {column!r}")


def _column(data, name: str) -> np.ndarray:
    if hasattr(data, "column"):
        return data.column(name)
    return np.asarray(data[name], dtype=float)


@dataclass
class _TermBlock:
    term: Term
    sl: slice
    names: list
    penalty: np.ndarray | None = None  # unit penalty in block coordinates
    penalty_rank: int = 0
    knots: np.ndarray | None = None
    z: np.ndarray | None = None  # basis -> constrained block transform
    domain: tuple | None = None
    levels: np.ndarray | None = None

    @property
    def is_smooth(self) -> bool:
        return self.penalty is not None


def _smooth_block(term: SmoothTerm, x: np.ndarray):
    spec = term.basis.with_domain(x)
    knots = build_knots(spec)
    b = evaluate_basis(knots, spec.degree, x)
    # sum-to-zero constraint over the observed points, absorbed by an
    # orthonormal reparameterization so the intercept stays identifiable
    u = b.sum(axis=0)
    z = scipy.linalg.null_space(u[None, :])
    design = b @ z
    pen_full = difference_penalty(spec.num_basis, spec.penalty_order).matrix
    penalty = z.T @ pen_full @ z
    penalty = 0.5 * (penalty + penalty.T)
    rank = spec.num_basis - spec.penalty_order
    names = [f"s({term.column}).{i}" for i in range(design.shape[1])]
    # effective basis domain (knot boundaries may differ from the data range
    # by rounding); predictions clamp against this
    domain = (float(knots[spec.degree]), float(knots[-spec.degree - 1]))
    return design, names, penalty, rank, knots, z, domain


def _step_columns(term: StepTerm, x: np.ndarray):
    k = len(term.cuts)
    if k == 0:
        return np.empty((x.size, 0)), []
    cuts = np.asarray(term.cuts)
    idx = np.searchsorted(cuts, x, side="left")
    counts = np.bincount(idx, minlength=k + 1)
    if np.any(counts == 0):
        raise EmptyCategoryError(int(np.argmin(counts)), term.cuts)
    cols = np.zeros((x.size, k))
    for s in range(1, k + 1):
        cols[:, s - 1] = idx == s
    names = [f"{term.column}[cat{s}]" for s in range(1, k + 1)]
    return cols, names


def _categorical_columns(term: CategoricalTerm, x: np.ndarray):
    levels = np.unique(x)
    cols = np.zeros((x.size, max(levels.size - 1, 0)))
    for i, lev in enumerate(levels[1:]):
        cols[:, i] = x == lev
    names = [f"{term.column}[{lev:g}]" for lev in levels[1:]]
    return cols, names, levels


def build_design(data, spec: ModelSpec):
    """Assemble the full design matrix with intercept and per-term blocks."""
    n = None
    parts = [None]  # placeholder for intercept
    names = ["(intercept)"]
    blocks: list[_TermBlock] = []
    start = 1
    for term in spec.terms:
        x = _column(data, term.column)
        if n is None:
            n = x.size
        elif x.size != n:
            raise ValueError(f"column {term.column!r} has length {x.size}, expected {n}")
        if isinstance(term, SmoothTerm):
            design, cnames, penalty, rank, knots, z, domain = _smooth_block(term, x)
            block = _TermBlock(
                term, slice(start, start + design.shape[1]), cnames,
                penalty=penalty, penalty_rank=rank, knots=knots, z=z, domain=domain,
            )
        elif isinstance(term, LinearTerm):
            design, cnames = x[:, None], [term.column]
            block = _TermBlock(term, slice(start, start + 1), cnames)
        elif isinstance(term, CategoricalTerm):
            design, cnames, levels = _categorical_columns(term, x)
            block = _TermBlock(
                term, slice(start, start + design.shape[1]), cnames, levels=levels
            )
        elif isinstance(term, StepTerm):
            design, cnames = _step_columns(term, x)
            block = _TermBlock(term, slice(start, start + design.shape[1]), cnames)
        else:
            raise TypeError(f"unknown term type {type(term).__name__}")
        parts.append(design)
        names.extend(cnames)
        blocks.append(block)
        start += design.shape[1]
    if n is None:
        n = _column(data, spec.response).size
    parts[0] = np.ones((n, 1))
    design = np.hstack(parts)
    return design, blocks, tuple(names)


def _assemble_penalty(p: int, blocks, lambdas) -> np.ndarray:
    s = np.zeros((p, p))
    for b in blocks:
        if b.is_smooth:
            s[b.sl, b.sl] += lambdas[b.term.column] * b.penalty
    return s


def _solve_pd(lhs, rhs):
    try:
        c, low = scipy.linalg.cho_factor(lhs)
    except scipy.linalg.LinAlgError:
        jitter = 1e-10 * np.trace(lhs) / lhs.shape[0]
        c, low = scipy.linalg.cho_factor(lhs + jitter * np.eye(lhs.shape[0]))
    return scipy.linalg.cho_solve((c, low), rhs), (c, low)


def _pirls(design, y, family, offset, s_lambda, beta, tol=1e-8, max_iter=100):
    """Penalized IRLS at a fixed penalty matrix.

    Step-halving keeps the penalized deviance non-increasing; the largest
    observed increase (should be <= 0) is returned for diagnostics.
    """
    eta = design @ beta + offset
    mu = family.clip_mu(family.inverse_link(eta))
    pdev = family.deviance(y, mu) + float(beta @ s_lambda @ beta)
    converged = False
    max_increase = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        dmu = family.mu_eta(eta)
        w = dmu**2 / family.variance(mu)
        z = (eta - offset) + (y - mu) / dmu
        lhs = design.T @ (w[:, None] * design) + s_lambda
        rhs = design.T @ (w * z)
        beta_full, _ = _solve_pd(lhs, rhs)
        direction = beta_full - beta
        step = 1.0
        while True:
            beta_try = beta + step * direction
            eta_try = design @ beta_try + offset
            mu_try = family.clip_mu(family.inverse_link(eta_try))
            pdev_try = family.deviance(y, mu_try) + float(
                beta_try @ s_lambda @ beta_try
            )
            if np.isfinite(pdev_try) and pdev_try <= pdev + 1e-10 * (1.0 + abs(pdev)):
                break
            step *= 0.5
            if step < 1e-12:
                break
        beta, eta, mu = beta_try, eta_try, mu_try
        if np.max(np.abs(beta)) > _BETA_LIMIT:
            raise ConvergenceError(
                "coefficients diverged during penalized IRLS "
                "(|beta| > 1e3); the model may be separable",
                reason="separation",
            )
        max_increase = max(max_increase, pdev_try - pdev)
        if abs(pdev_try - pdev) / (abs(pdev_try) + 0.1) < tol:
            pdev = pdev_try
            converged = True
            break
        pdev = pdev_try
    dmu = family.mu_eta(eta)
    w = dmu**2 / family.variance(mu)
    return beta, eta, mu, w, pdev, converged, it, max_increase


@dataclass
class FittedGAM:
    """Converged additive-model fit.

    Smooth evaluations are centered (they sum to zero over the training
    points); their pointwise standard errors come from the posterior
    covariance of the penalized fit, scaled by the family dispersion.
    """

    spec: ModelSpec
    family: Family
    n: int
    column_names: tuple
    coef: np.ndarray
    cov: np.ndarray
    blocks: list
    lambdas: dict
    edf: float
    phi: float
    dispersion: float
    log_lik: float
    deviance: float
    eta: np.ndarray
    mu: np.ndarray
    offset_values: np.ndarray
    converged: bool
    n_outer: int
    max_pdev_increase: float
    se_clamp_count: int = 0
    warnings: list = field(default_factory=list)
    _smooths: dict = field(default_factory=dict, repr=False)

    @property
    def intercept(self) -> float:
        return float(self.coef[0])

    def block_for(self, column: str) -> _TermBlock:
        for b in self.blocks:
            if b.term.column == column:
                return b
        raise KeyError(f"no term for column {column!r}")

    def smooth_values(self, column: str) -> np.ndarray:
        """Centered smooth evaluations at the training points."""
        if column not in self._smooths:
            raise KeyError(f"{column!r} is not a smooth term of this fit")
        return self._smooths[column][0]

    def smooth_se(self, column: str) -> np.ndarray:
        """Pointwise standard errors of the smooth at the training points."""
        if column not in self._smooths:
            raise KeyError(f"{column!r} is not a smooth term of this fit")
        return self._smooths[column][1]

    def coefficient_table(self):
        """(name, estimate, se) rows for the unpenalized coefficients."""
        se = np.sqrt(np.maximum(np.diag(self.cov), 0.0))
        rows = [("(intercept)", float(self.coef[0]), float(se[0]))]
        for b in self.blocks:
            if b.is_smooth:
                continue
            for j, name in zip(range(b.sl.start, b.sl.stop), b.names):
                rows.append((name, float(self.coef[j]), float(se[j])))
        return rows

    def linear_predictor(self, data=None) -> np.ndarray:
        """Linear predictor; out-of-domain smooth inputs in new data are
        clamped to the training domain (logged)."""
        if data is None:
            return self.eta
        n = _column(data, self.blocks[0].term.column).size if self.blocks else None
        eta = None
        clamped = 0
        for b in self.blocks:
            x = _column(data, b.term.column)
            if eta is None:
                eta = np.full(x.size, self.intercept)
            if b.is_smooth:
                lo, hi = b.domain
                out = (x < lo) | (x > hi)
                clamped += int(np.sum(out))
                xc = np.clip(x, lo, hi)
                basis = evaluate_basis(b.knots, b.term.basis.degree, xc) @ b.z
                eta += basis @ self.coef[b.sl]
            elif isinstance(b.term, LinearTerm):
                eta += x * self.coef[b.sl.start]
            elif isinstance(b.term, CategoricalTerm):
                for i, lev in enumerate(b.levels[1:]):
                    eta += (x == lev) * self.coef[b.sl.start + i]
            elif isinstance(b.term, StepTerm) and len(b.term.cuts) > 0:
                idx = np.searchsorted(np.asarray(b.term.cuts), x, side="left")
                for s in range(1, len(b.term.cuts) + 1):
                    eta += (idx == s) * self.coef[b.sl.start + s - 1]
        if eta is None:
            n = _column(data, self.spec.response).size
            eta = np.full(n, self.intercept)
        if clamped:
            logger.warning("clamped %d prediction points to the training domain", clamped)
        if self.spec.offset is not None:
            eta = eta + _column(data, self.spec.offset)
        return eta

    def predict(self, data=None) -> np.ndarray:
        return self.family.inverse_link(self.linear_predictor(data))


def fit_gam(
    data,
    spec: ModelSpec,
    lambdas=None,
    max_outer: int = 200,
    inner_tol: float = 1e-8,
    lambda_tol: float = 1e-3,
) -> FittedGAM:
    """Fit the additive model by penalized IRLS.

    Smoothing parameters are selected by Fellner-Schall updates interleaved
    with the IRLS loop unless ``lambdas`` fixes them (a scalar or a mapping
    column -> lambda).
    """
    family = get_family(spec.family)
    y = _column(data, spec.response)
    family.validate_y(y)
    n = y.size
    if spec.terms and n < 10 * len(spec.terms):
        raise ValueError(
            f"n={n} is below the sanity floor of 10 observations per term "
            f"({len(spec.terms)} terms)"
        )
    offset = (
        np.zeros(n) if spec.offset is None else _column(data, spec.offset)
    )
    design, blocks, names = build_design(data, spec)
    p = design.shape[1]
    smooth_blocks = [b for b in blocks if b.is_smooth]

    # unpenalized columns must be identifiable on their own
    unpen_idx = [0] + [
        j for b in blocks if not b.is_smooth for j in range(b.sl.start, b.sl.stop)
    ]
    unpen_names = [names[j] for j in unpen_idx]
    if len(unpen_idx) > 1:
        check_full_rank(design[:, unpen_idx], unpen_names)

    fixed = lambdas is not None
    lam = {}
    for b in smooth_blocks:
        if fixed:
            lam[b.term.column] = float(
                lambdas if np.isscalar(lambdas) else lambdas[b.term.column]
            )
        else:
            lam[b.term.column] = 1.0

    beta = np.zeros(p)
    ybar = float(np.mean(y))
    if family.name == "binomial":
        mu0 = (np.sum(y) + 0.5) / (n + 1)
    elif family.name == "poisson":
        mu0 = max(ybar, 0.1)
    else:
        mu0 = ybar
    beta[0] = float(np.asarray(family.link(np.asarray(mu0)))) - float(np.mean(offset))

    converged = False
    max_increase = 0.0
    outer = 0
    pirls_state = None
    # step-length extension: double the log-step while updates keep moving a
    # lambda in the same direction, reset on a direction flip
    accel = {b.term.column: 1.0 for b in smooth_blocks}
    prev_dir = {b.term.column: 0.0 for b in smooth_blocks}
    for outer in range(1, max_outer + 1):
        s_lambda = _assemble_penalty(p, blocks, lam)
        pirls_state = _pirls(
            design, y, family, offset, s_lambda, beta, tol=inner_tol
        )
        beta, eta, mu, w, pdev, inner_conv, _, inc = pirls_state[:8]
        max_increase = max(max_increase, inc)
        if not smooth_blocks or fixed:
            converged = inner_conv
            break
        xtwx = design.T @ (w[:, None] * design)
        v_u, _ = _solve_pd(xtwx + s_lambda, np.eye(p))
        edf = float(np.einsum("ij,ji->", v_u, xtwx))
        disp = 1.0
        if family.has_dispersion:
            disp = float(np.sum((y - mu) ** 2) / max(n - edf, 1.0))
        new_lam = {}
        delta = 0.0
        for b in smooth_blocks:
            col = b.term.column
            vbb = v_u[b.sl, b.sl]
            tr_vs = float(np.einsum("ij,ji->", vbb, b.penalty))
            num = b.penalty_rank / lam[col] - tr_vs
            beta_b = beta[b.sl]
            den = float(beta_b @ b.penalty @ beta_b)
            if den <= 0.0 or not np.isfinite(den):
                new = LAMBDA_MAX
            else:
                new = disp * lam[col] * max(num, 1e-12) / den
            new = float(np.clip(new, LAMBDA_MIN, LAMBDA_MAX))
            logr = np.log(new) - np.log(lam[col])
            delta = max(delta, abs(logr))
            if logr * prev_dir[col] > 0.0:
                accel[col] = min(accel[col] * 2.0, 8.0)
            else:
                accel[col] = 1.0
            prev_dir[col] = logr
            new_lam[col] = float(
                np.clip(lam[col] * np.exp(accel[col] * logr), LAMBDA_MIN, LAMBDA_MAX)
            )
        if delta < lambda_tol and inner_conv:
            converged = True
            break
        lam = new_lam
    if not converged:
        raise ConvergenceError(
            f"smoothing-parameter selection did not stabilize after {outer} rounds"
        )

    beta, eta, mu, w, pdev, _, _, _ = pirls_state
    s_lambda = _assemble_penalty(p, blocks, lam)
    xtwx = design.T @ (w[:, None] * design)
    v_u, _ = _solve_pd(xtwx + s_lambda, np.eye(p))
    v_u = 0.5 * (v_u + v_u.T)
    edf = float(np.einsum("ij,ji->", v_u, xtwx))
    dispersion = 1.0
    if family.has_dispersion:
        dispersion = float(np.sum((y - mu) ** 2) / max(n - edf, 1.0))
    cov = dispersion * v_u
    phi = edf + (1.0 if family.has_dispersion else 0.0)

    fit = FittedGAM(
        spec=spec,
        family=family,
        n=n,
        column_names=names,
        coef=beta,
        cov=cov,
        blocks=blocks,
        lambdas=lam,
        edf=edf,
        phi=phi,
        dispersion=dispersion,
        log_lik=family.log_likelihood(y, mu),
        deviance=family.deviance(y, mu),
        eta=eta,
        mu=mu,
        offset_values=offset,
        converged=converged,
        n_outer=outer,
        max_pdev_increase=max_increase,
    )

    clamps = 0
    for b in smooth_blocks:
        xb = design[:, b.sl]
        values = xb @ beta[b.sl]
        var = np.einsum("ij,jk,ik->i", xb, cov[b.sl, b.sl], xb)
        se = np.sqrt(np.maximum(var, 0.0))
        low = se < _SE_FLOOR
        clamps += int(np.sum(low))
        se = np.maximum(se, _SE_FLOOR)
        fit._smooths[b.term.column] = (values, se)
    fit.se_clamp_count = clamps
    if clamps:
        fit.warnings.append(f"clamped {clamps} smooth standard errors to {_SE_FLOOR}")
        logger.warning("clamped %d smooth standard errors to the floor", clamps)
    return fit


def pointwise_se(fit: FittedGAM, column: str) -> np.ndarray:
    """Pointwise standard errors of the smooth for ``column``."""
    return fit.smooth_se(column)


def effective_dimension(fit: FittedGAM) -> float:
    """Trace-based effective dimension of the fit (Gaussian adds one for the
    scale parameter)."""
    return fit.phi
