"""B-spline design matrices and difference penalties for P-spline smooths."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import BSpline


@dataclass(frozen=True)
class BasisSpec:
    """Configuration of one P-spline basis.

    Equidistant interior knots over ``domain``, B-splines of ``degree`` and a
    difference penalty of order ``penalty_order`` on adjacent coefficients.
    ``domain`` may be left as None and filled from observed data later.
    """

    num_interior_knots: int = 20
    degree: int = 3
    penalty_order: int = 2
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        if self.degree < 0:
            raise ValueError(f"spline degree must be >= 0, got {self.degree}")
        if self.penalty_order < 1:
            raise ValueError(
                f"penalty order must be >= 1, got {self.penalty_order}"
            )
        if self.num_interior_knots < self.penalty_order + 1:
            raise ValueError(
                "need num_interior_knots >= penalty_order + 1, got "
                f"{self.num_interior_knots} < {self.penalty_order + 1}"
            )
        if self.domain is not None:
            lo, hi = self.domain
            if not (np.isfinite(lo) and np.isfinite(hi)):
                raise ValueError(f"non-finite domain {self.domain}")
            if not lo < hi:
                raise ValueError(f"degenerate domain [{lo}, {hi}]")

    @property
    def num_basis(self) -> int:
        """Number of B-spline basis functions on the full knot sequence."""
        return self.num_interior_knots + self.degree + 1

    def with_domain(self, x) -> "BasisSpec":
        """Return a copy whose domain covers the observed values ``x``."""
        x = np.asarray(x, dtype=float)
        if x.size == 0 or not np.all(np.isfinite(x)):
            raise ValueError("covariate sample must be non-empty and finite")
        lo, hi = float(np.min(x)), float(np.max(x))
        if self.domain is not None:
            lo = min(lo, self.domain[0])
            hi = max(hi, self.domain[1])
        if not lo < hi:
            raise ValueError(f"degenerate domain [{lo}, {hi}]")
        return replace(self, domain=(lo, hi))


def build_knots(spec: BasisSpec, x=None) -> np.ndarray:
    """Equidistant knot sequence for ``spec``, extended ``degree`` + 1 knots
    beyond each boundary with the same spacing.

    Length is ``num_interior_knots + 2 * (degree + 1)``.  When ``spec`` has no
    domain it is taken from the sample ``x``.
    """
    if x is not None:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            raise ValueError("covariate sample is empty")
        if not np.all(np.isfinite(x)):
            raise ValueError("covariate sample contains non-finite values")
    if spec.domain is None:
        if x is None:
            raise ValueError("BasisSpec has no domain and no sample was given")
        spec = spec.with_domain(x)
    lo, hi = spec.domain
    k, d = spec.num_interior_knots, spec.degree
    h = (hi - lo) / (k + 1)
    return lo + h * np.arange(-d, k + d + 2)


def evaluate_basis(knots, degree: int, x) -> np.ndarray:
    """Dense B-spline design matrix (n x num_basis) at the points ``x``.

    Rows sum to one (partition of unity) for x inside the basis domain
    ``[knots[degree], knots[-degree-1]]``; points outside raise.
    """
    knots = np.asarray(knots, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    lo, hi = knots[degree], knots[-degree - 1]
    # points within rounding noise of the boundary are snapped onto it
    tol = 1e-9 * max(hi - lo, 1.0)
    if np.any(x < lo - tol) or np.any(x > hi + tol):
        bad = x[(x < lo - tol) | (x > hi + tol)]
        raise ValueError(
            f"points outside the basis domain [{lo}, {hi}]: "
            f"e.g. {bad[0]} (of {bad.size})"
        )
    x = np.clip(x, lo, hi)
    return BSpline.design_matrix(x, knots, degree).toarray()


@dataclass(frozen=True)
class PenaltyMatrix:
    """Difference penalty D'D of a given order.

    The matrix is symmetric positive semidefinite with rank
    ``num_basis - order``.
    """

    order: int
    matrix: np.ndarray

    @property
    def rank(self) -> int:
        return self.matrix.shape[0] - self.order


def difference_penalty(num_basis: int, order: int) -> PenaltyMatrix:
    """Penalty matrix D'D where D is the ``order``-th forward-difference
    operator acting on ``num_basis`` coefficients."""
    if num_basis <= order:
        raise ValueError(
            f"need num_basis > order, got num_basis={num_basis}, order={order}"
        )
    d = np.diff(np.eye(num_basis), n=order, axis=0)
    return PenaltyMatrix(order=order, matrix=d.T @ d)
