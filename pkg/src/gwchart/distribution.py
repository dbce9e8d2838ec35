"""Generalized (exponentiated) Weibull distribution with unit scale.

The cdf is ``F(x) = (1 - exp(-x**theta))**alpha`` for ``x > 0``.  All
functions accept scalars or numpy arrays for ``x`` / ``p`` and return the
matching shape.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError

__all__ = [
    "GwParams",
    "HazardShape",
    "pdf",
    "logpdf",
    "cdf",
    "sf",
    "log_sf",
    "quantile",
    "sample",
    "classify_hazard",
    "weibull",
    "generalized_exponential",
    "burr_x",
    "rayleigh",
]


@dataclass(frozen=True)
class GwParams:
    """Shape pair ``(theta, alpha)``; the scale is fixed at 1."""

    theta: float
    alpha: float

    def __post_init__(self):
        for name in ("theta", "alpha"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be a positive finite number, got {value!r}")
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(self, "alpha", float(self.alpha))

    def as_array(self) -> np.ndarray:
        return np.array([self.theta, self.alpha])

    def shifted(self, delta_theta: float = 0.0, delta_alpha: float = 0.0) -> "GwParams":
        return GwParams(self.theta + delta_theta, self.alpha + delta_alpha)


class HazardShape(str, enum.Enum):
    BATHTUB = "Bathtub"
    UNIMODAL = "Unimodal"
    INCREASING = "Increasing"
    DECREASING = "Decreasing"
    BOUNDARY = "Boundary"


def _positive(x, name="x"):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise DomainError(f"{name} must be > 0")
    return x


def _unwrap(value, like):
    return float(value) if np.ndim(like) == 0 else value


def _log_weibull_cdf(u):
    # log(1 - exp(-u)) without cancellation at either end
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(u < 0.6931471805599453, np.log(-np.expm1(-u)), np.log1p(-np.exp(-u)))


def logpdf(x, params: GwParams):
    x_ = _positive(x)
    th, a = params.theta, params.alpha
    u = x_**th
    out = np.log(a * th) + (a - 1.0) * _log_weibull_cdf(u) - u + (th - 1.0) * np.log(x_)
    return _unwrap(out, x)


def pdf(x, params: GwParams):
    """Density ``alpha*theta*(1-e^{-x^theta})^(alpha-1) e^{-x^theta} x^(theta-1)``."""
    return _unwrap(np.exp(logpdf(x, params)), x)


def cdf(x, params: GwParams):
    x_ = _positive(x)
    out = np.exp(params.alpha * _log_weibull_cdf(x_**params.theta))
    return _unwrap(out, x)


def log_sf(x, params: GwParams):
    x_ = _positive(x)
    la = params.alpha * _log_weibull_cdf(x_**params.theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(la > -0.6931471805599453, np.log(-np.expm1(la)), np.log1p(-np.exp(la)))
    return _unwrap(out, x)


def sf(x, params: GwParams):
    """Survival function ``1 - F(x)``, accurate far into the upper tail."""
    x_ = _positive(x)
    out = -np.expm1(params.alpha * _log_weibull_cdf(x_**params.theta))
    return _unwrap(out, x)


def quantile(p, params: GwParams):
    """Inverse cdf ``[ln(1/(1 - p^(1/alpha)))]^(1/theta)``.

    ``P = p^(1/alpha)`` is formed as ``exp(ln(p)/alpha)``; the log term uses
    ``log1p(-P)`` for small ``P`` and ``log(-expm1(ln(p)/alpha))`` near 1.
    """
    p_ = np.asarray(p, dtype=float)
    if np.any(~((p_ > 0) & (p_ < 1))):
        raise DomainError("p must lie in the open interval (0, 1)")
    lp = np.log(p_) / params.alpha
    with np.errstate(divide="ignore"):
        neg_log = np.where(lp < -0.6931471805599453, -np.log1p(-np.exp(lp)),
                           -np.log(-np.expm1(lp)))
    out = neg_log ** (1.0 / params.theta)
    return _unwrap(out, p)


def sample(params: GwParams, n: int, rng=None) -> np.ndarray:
    """Draw ``n`` values by inverse-cdf sampling and return them sorted.

    ``rng`` is a :class:`numpy.random.Generator` or anything accepted by
    :func:`numpy.random.default_rng`.
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n!r}")
    rng = np.random.default_rng(rng)
    u = rng.random(int(n))
    u[u == 0.0] = np.finfo(float).tiny
    return np.sort(quantile(u, params))


def classify_hazard(params: GwParams) -> HazardShape:
    """Shape of the hazard rate, decided by theta and alpha*theta.

    Bathtub for theta > 1 > alpha*theta, unimodal for theta < 1 < alpha*theta,
    increasing when both exceed 1 and decreasing when both are below 1.
    """
    th, at = params.theta, params.alpha * params.theta
    if th == 1.0 or at == 1.0:
        return HazardShape.BOUNDARY
    if th > 1.0:
        return HazardShape.BATHTUB if at < 1.0 else HazardShape.INCREASING
    return HazardShape.UNIMODAL if at > 1.0 else HazardShape.DECREASING


# Named special cases (unit scale).

def weibull(shape: float) -> GwParams:
    """Weibull ``1 - exp(-x**shape)``."""
    return GwParams(shape, 1.0)


def generalized_exponential(alpha: float) -> GwParams:
    """Generalized exponential ``(1 - exp(-x))**alpha``."""
    return GwParams(1.0, alpha)


def burr_x(alpha: float) -> GwParams:
    """Burr type X ``(1 - exp(-x**2))**alpha``."""
    return GwParams(2.0, alpha)


def rayleigh() -> GwParams:
    """Rayleigh ``1 - exp(-x**2)``."""
    return GwParams(2.0, 1.0)
