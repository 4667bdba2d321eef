"""IRLS fitting of parametric exponential-family models with offsets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConvergenceError, RankDeficiencyError
from .families import Family, get_family

_BETA_LIMIT = 1e3


@dataclass
class ParametricFit:
    """Converged IRLS fit of a parametric design."""

    coefficients: np.ndarray
    covariance: np.ndarray
    log_likelihood: float
    converged: bool
    n_obs: int
    deviance: float
    n_iter: int
    column_names: tuple[str, ...] = field(default_factory=tuple)
    dispersion: float = 1.0


def check_full_rank(design, column_names=None) -> None:
    """Raise RankDeficiencyError naming collinear columns if the design is
    not of full column rank."""
    design = np.asarray(design, dtype=float)
    n, p = design.shape
    _, r, pivot = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(n, p) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < p:
        if column_names is None:
            column_names = [f"column {i}" for i in range(p)]
        raise RankDeficiencyError([column_names[i] for i in sorted(pivot[rank:])])


def _weighted_solve(design, w, z):
    lhs = design.T @ (w[:, None] * design)
    rhs = design.T @ (w * z)
    return scipy.linalg.solve(lhs, rhs, assume_a="pos"), lhs


def irls_fit(
    design,
    y,
    family,
    offset=None,
    column_names=None,
    max_iter: int = 100,
    tol: float = 1e-9,
) -> ParametricFit:
    """Fit an exponential-family model by iteratively reweighted least squares.

    The returned coefficients satisfy the weighted normal equations at
    convergence; the deviance is non-increasing across iterations (a halving
    step guards the rare overshoot).  Diverging coefficients (|beta| beyond
    1e3, e.g. complete separation in logistic models) raise ConvergenceError.
    """
    design = np.asarray(design, dtype=float)
    if design.ndim != 2:
        raise ValueError("design must be a 2-d array")
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if y.shape != (n,):
        raise ValueError(f"response length {y.shape} does not match {n} rows")
    family = get_family(family)
    family.validate_y(y)
    if offset is None:
        offset = np.zeros(n)
    else:
        offset = np.asarray(offset, dtype=float)
        if offset.shape != (n,):
            raise ValueError("offset length does not match design rows")
    if column_names is None:
        column_names = tuple(f"x{i}" for i in range(p))
    check_full_rank(design, column_names)

    mu = family.clip_mu(family.initial_mu(y))
    eta = family.link(mu)
    beta = None
    dev = family.deviance(y, mu)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        dmu = family.mu_eta(eta)
        w = dmu**2 / family.variance(family.clip_mu(mu))
        z = (eta - offset) + (y - mu) / dmu
        beta_new, xtwx = _weighted_solve(design, w, z)
        if beta is not None:
            # halve back toward the previous iterate if the deviance rose
            step = 1.0
            direction = beta_new - beta
            while step > 1e-12:
                eta_try = design @ (beta + step * direction) + offset
                dev_try = family.deviance(y, family.clip_mu(family.inverse_link(eta_try)))
                if np.isfinite(dev_try) and dev_try <= dev + 1e-10:
                    break
                step *= 0.5
            beta_new = beta + step * direction
        beta = beta_new
        if np.max(np.abs(beta)) > _BETA_LIMIT:
            raise ConvergenceError(
                "coefficients diverged (|beta| > 1e3); the model may be "
                "separable or unidentifiable",
                reason="separation",
            )
        eta = design @ beta + offset
        mu = family.clip_mu(family.inverse_link(eta))
        dev_new = family.deviance(y, mu)
        if abs(dev_new - dev) / (abs(dev_new) + 0.1) < tol:
            dev = dev_new
            converged = True
            break
        dev = dev_new

    dmu = family.mu_eta(eta)
    w = dmu**2 / family.variance(family.clip_mu(mu))
    xtwx = design.T @ (w[:, None] * design)
    dispersion = 1.0
    if family.has_dispersion:
        dof = max(n - p, 1)
        dispersion = float(np.sum((y - mu) ** 2) / dof)
    covariance = dispersion * scipy.linalg.inv(xtwx)
    covariance = 0.5 * (covariance + covariance.T)
    return ParametricFit(
        coefficients=beta,
        covariance=covariance,
        log_likelihood=family.log_likelihood(y, mu),
        converged=converged,
        n_obs=n,
        deviance=dev,
        n_iter=it,
        column_names=tuple(column_names),
        dispersion=dispersion,
    )


def log_likelihood(fit: ParametricFit, design, y, family: Family | str, offset=None) -> float:
    """Exact log-likelihood of ``fit`` on the given data."""
    if not fit.converged:
        raise ValueError("log_likelihood requires a converged fit")
    design = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = design.shape
    if y.shape != (n,):
        raise ValueError("response length does not match design rows")
    if fit.coefficients.shape != (p,):
        raise ValueError(
            f"fit has {fit.coefficients.shape[0]} coefficients, design has {p} columns"
        )
    family = get_family(family)
    if offset is None:
        offset = np.zeros(n)
    eta = design @ fit.coefficients + np.asarray(offset, dtype=float)
    mu = family.clip_mu(family.inverse_link(eta))
    return family.log_likelihood(y, mu)
