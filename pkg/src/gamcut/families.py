"""Exponential-family response distributions with their canonical links."""

from __future__ import annotations

import numpy as np
from scipy.special import expit, gammaln, xlogy

_MU_EPS = 1e-10
_ETA_MAX = 700.0  # exp overflow guard


class Family:
    """One exponential-family distribution: link, variance and likelihood."""

    name: str = ""
    has_dispersion: bool = False

    def link(self, mu):
        raise NotImplementedError

    def inverse_link(self, eta):
        raise NotImplementedError

    def mu_eta(self, eta):
        """Derivative of the inverse link, d mu / d eta."""
        raise NotImplementedError

    def variance(self, mu):
        raise NotImplementedError

    def log_likelihood(self, y, mu) -> float:
        raise NotImplementedError

    def deviance(self, y, mu) -> float:
        raise NotImplementedError

    def initial_mu(self, y):
        raise NotImplementedError

    def clip_mu(self, mu):
        return mu

    def validate_y(self, y) -> None:
        y = np.asarray(y)
        if not np.all(np.isfinite(y)):
            raise ValueError(f"{self.name}: response contains non-finite values")

    def __repr__(self):
        return f"{type(self).__name__}()"


class Gaussian(Family):
    """Gaussian response with identity link; the variance is profiled out of
    the log-likelihood at its MLE."""

    name = "gaussian"
    has_dispersion = True

    def link(self, mu):
        return np.asarray(mu, dtype=float)

    def inverse_link(self, eta):
        return np.asarray(eta, dtype=float)

    def mu_eta(self, eta):
        return np.ones_like(np.asarray(eta, dtype=float))

    def variance(self, mu):
        return np.ones_like(np.asarray(mu, dtype=float))

    def log_likelihood(self, y, mu):
        y = np.asarray(y, dtype=float)
        n = y.size
        rss = float(np.sum((y - mu) ** 2))
        sigma2 = max(rss / n, 1e-300)
        return -0.5 * n * (np.log(2.0 * np.pi * sigma2) + 1.0)

    def deviance(self, y, mu):
        return float(np.sum((np.asarray(y, dtype=float) - mu) ** 2))

    def initial_mu(self, y):
        return np.asarray(y, dtype=float)


class Binomial(Family):
    """Bernoulli response with logit link."""

    name = "binomial"

    def link(self, mu):
        mu = self.clip_mu(np.asarray(mu, dtype=float))
        return np.log(mu / (1.0 - mu))

    def inverse_link(self, eta):
        return expit(np.asarray(eta, dtype=float))

    def mu_eta(self, eta):
        p = expit(np.asarray(eta, dtype=float))
        return np.maximum(p * (1.0 - p), _MU_EPS)

    def variance(self, mu):
        return np.asarray(mu, dtype=float) * (1.0 - np.asarray(mu, dtype=float))

    def clip_mu(self, mu):
        return np.clip(mu, _MU_EPS, 1.0 - _MU_EPS)

    def log_likelihood(self, y, mu):
        y = np.asarray(y, dtype=float)
        mu = self.clip_mu(np.asarray(mu, dtype=float))
        return float(np.sum(xlogy(y, mu) + xlogy(1.0 - y, 1.0 - mu)))

    def deviance(self, y, mu):
        y = np.asarray(y, dtype=float)
        mu = self.clip_mu(np.asarray(mu, dtype=float))
        return float(
            2.0 * np.sum(xlogy(y, y / mu) + xlogy(1.0 - y, (1.0 - y) / (1.0 - mu)))
        )

    def initial_mu(self, y):
        return (np.asarray(y, dtype=float) + 0.5) / 2.0

    def validate_y(self, y):
        super().validate_y(y)
        y = np.asarray(y, dtype=float)
        if not np.all((y == 0.0) | (y == 1.0)):
            raise ValueError("binomial: response must be coded 0/1")


class Poisson(Family):
    """Poisson counts with log link."""

    name = "poisson"

    def link(self, mu):
        return np.log(np.maximum(np.asarray(mu, dtype=float), _MU_EPS))

    def inverse_link(self, eta):
        return np.exp(np.minimum(np.asarray(eta, dtype=float), _ETA_MAX))

    def mu_eta(self, eta):
        return np.maximum(self.inverse_link(eta), _MU_EPS)

    def variance(self, mu):
        return np.maximum(np.asarray(mu, dtype=float), _MU_EPS)

    def clip_mu(self, mu):
        return np.maximum(mu, _MU_EPS)

    def log_likelihood(self, y, mu):
        y = np.asarray(y, dtype=float)
        mu = self.clip_mu(np.asarray(mu, dtype=float))
        return float(np.sum(xlogy(y, mu) - mu - gammaln(y + 1.0)))

    def deviance(self, y, mu):
        y = np.asarray(y, dtype=float)
        mu = self.clip_mu(np.asarray(mu, dtype=float))
        return float(2.0 * np.sum(xlogy(y, y / mu) - (y - mu)))

    def initial_mu(self, y):
        return np.asarray(y, dtype=float) + 0.5

    def validate_y(self, y):
        super().validate_y(y)
        y = np.asarray(y, dtype=float)
        if np.any(y < 0) or np.any(np.abs(y - np.round(y)) > 1e-8):
            raise ValueError("poisson: response must be non-negative counts")


_FAMILIES = {
    "gaussian": Gaussian,
    "gaussian-identity": Gaussian,
    "binomial": Binomial,
    "binomial-logit": Binomial,
    "poisson": Poisson,
    "poisson-log": Poisson,
}


def get_family(family) -> Family:
    """Resolve a family name (or pass an instance through)."""
    if isinstance(family, Family):
        return family
    try:
        return _FAMILIES[str(family).lower()]()
    except KeyError:
        raise ValueError(
            f"unknown family {family!r}; choose from "
            + ", ".join(sorted(set(_FAMILIES)))
        ) from None
