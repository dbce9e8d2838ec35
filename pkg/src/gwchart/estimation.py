"""Maximum-likelihood fitting of (theta, alpha) from hybrid-censored samples.

The EM algorithm treats the lifetimes of censored units as missing.  Given
the current iterate, each censored unit is replaced by the conditional law of
``Y | Y > c``, represented by a fixed quadrature rule; the M-step then
maximises the expected complete-data log-likelihood by Newton-Raphson.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate, optimize

from . import _kernels as K
from .censoring import HybridCensoredSample
from .distribution import GwParams, cdf, quantile
from .exceptions import ConvergenceError, DegenerateSampleError, DomainError

log = logging.getLogger(__name__)

__all__ = [
    "FitConfig",
    "FitResult",
    "observed_loglik",
    "conditional_A",
    "conditional_B",
    "conditional_C",
    "em_fit",
    "quantile_mle",
    "ks_statistic",
]


@dataclass(frozen=True)
class FitConfig:
    """Starting point and tolerances for :func:`em_fit`.

    ``em_tol`` bounds the largest relative parameter change between EM
    iterations, ``nr_tol`` the Newton step (in log-parameters) of the M-step,
    and ``quad_tol`` selects the density of the E-step quadrature rule.
    With ``accelerate`` each iteration tries a safeguarded SQUAREM
    extrapolation; it never changes the fixed point.
    """

    init: GwParams | None = None
    em_tol: float = 1e-6
    em_max_iter: int = 500
    nr_tol: float = 1e-8
    nr_max_iter: int = 50
    quad_tol: float = 1e-8
    accelerate: bool = True

    def __post_init__(self):
        for name in ("em_tol", "nr_tol", "quad_tol"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be > 0")
        for name in ("em_max_iter", "nr_max_iter"):
            if getattr(self, name) < 1:
                raise DomainError(f"{name} must be >= 1")

    def with_init(self, init: GwParams | None) -> "FitConfig":
        return FitConfig(init, self.em_tol, self.em_max_iter, self.nr_tol,
                         self.nr_max_iter, self.quad_tol, self.accelerate)

    def kernel_args(self):
        lq, qr, bw = _rule(self.quad_tol)
        return (self.em_tol, self.em_max_iter, self.nr_tol, self.nr_max_iter,
                lq, qr, bw, self.accelerate)


_RULES: dict = {}


def _rule(quad_tol):
    key = 0 if quad_tol >= 1e-9 else 1 if quad_tol >= 1e-12 else 2
    if key not in _RULES:
        _RULES[key] = K.rule_for_tol(quad_tol)
    return _RULES[key]


@dataclass(frozen=True, eq=False)
class FitResult:
    params: GwParams
    loglik: float
    iterations: int
    converged: bool
    trace: list = field(repr=False)
    samples: tuple = field(repr=False, default=())

    @property
    def n(self) -> int:
        return sum(s.n for s in self.samples)

    @property
    def d(self) -> int:
        return sum(s.d for s in self.samples)

    def to_dict(self) -> dict:
        return {
            "theta": self.params.theta,
            "alpha": self.params.alpha,
            "loglik": self.loglik,
            "iterations": self.iterations,
            "converged": self.converged,
            "n": self.n,
            "d": self.d,
        }


def _as_samples(samples) -> tuple[HybridCensoredSample, ...]:
    if isinstance(samples, HybridCensoredSample):
        return (samples,)
    out = tuple(samples)
    if not out or not all(isinstance(s, HybridCensoredSample) for s in out):
        raise DomainError("expected a HybridCensoredSample or a non-empty sequence of them")
    return out


def _pack(samples: Sequence[HybridCensoredSample]):
    lx = np.log(np.concatenate([s.observed for s in samples])) if samples else np.empty(0)
    cens_c = np.array([s.c for s in samples], dtype=float)
    cens_k = np.array([s.n_censored for s in samples], dtype=float)
    return lx, cens_c, cens_k


def observed_loglik(samples, params: GwParams) -> float:
    """Hybrid-censored log-likelihood (additive constant dropped).

    A sequence of samples gives the sum of their log-likelihoods.
    """
    samples = _as_samples(samples)
    if sum(s.d for s in samples) == 0:
        raise DegenerateSampleError("no observed failures: the likelihood does not identify the parameters")
    lx, cc, ck = _pack(samples)
    return float(K.observed_loglik(lx, cc, ck, params.theta, params.alpha))


# -- conditional expectations of the censored lifetimes ---------------------

def truncated_law(c: float, params: GwParams):
    """Map ``s`` in (0, 1) to ``(u, ln y, ln F(y))`` with ``y = Y**(1/theta)``,
    ``u = y**theta``, where ``Y | Y > c`` is written through its survival
    value ``S(Y) = S(c) * s``.

    Under this map the truncated law becomes uniform on (0, 1), so
    ``E[g(Y) | Y > c] = integral of g over s``; the remaining endpoint
    singularities are logarithmic.
    """
    if not c > 0:
        raise DomainError("c must be > 0")
    th, a = params.theta, params.alpha
    log_s = K.log_sf_at(c, th, a)
    if log_s < math.log(1e-300):
        raise ConvergenceError(f"truncation probability 1 - F({c}) underflows")
    s_c = math.exp(log_s)
    f_c = -math.expm1(log_s)

    def point(s):
        omega = s_c * s
        # ln F(y) = ln(1 - omega), keeping precision on both sides
        log_f = math.log(f_c + s_c * (1.0 - s)) if omega > 0.5 else math.log1p(-omega)
        log_w = log_f / a  # ln(1 - exp(-u))
        u = -math.log(-math.expm1(log_w)) if log_w > -0.6931471805599453 else -math.log1p(-math.exp(log_w))
        return u, math.log(u) / th, log_f

    return point


def _truncated_expectation(g, c, params: GwParams, quad_tol):
    """E[g(u, ln y, ln F) | Y > c] by adaptive quadrature over :func:`truncated_law`."""
    point = truncated_law(c, params)
    total = 0.0
    for lo, hi in ((0.0, 0.5), (0.5, 1.0)):
        part, _err = integrate.quad(lambda s: g(*point(s)), lo, hi,
                                    epsabs=quad_tol, epsrel=quad_tol, limit=200)
        total += part
    return total


def conditional_A(c: float, params: GwParams, quad_tol: float = 1e-8) -> float:
    """E[ln Y | Y > c]."""
    return _truncated_expectation(lambda u, lny, lf: lny, c, params, quad_tol)


def conditional_B(c: float, params: GwParams, quad_tol: float = 1e-8) -> float:
    """E[Y**theta | Y > c]."""
    return _truncated_expectation(lambda u, lny, lf: u, c, params, quad_tol)


def conditional_C(c: float, params: GwParams, quad_tol: float = 1e-8) -> float:
    """E[ln(1 - exp(-Y**theta)) | Y > c]."""
    return _truncated_expectation(lambda u, lny, lf: lf / params.alpha, c, params, quad_tol)


# -- EM ---------------------------------------------------------------------

def _weibull_start(lx, cc, ck) -> GwParams:
    """Best theta with alpha fixed at 1; used when no starting point is given."""
    res = optimize.minimize_scalar(
        lambda s: -K.observed_loglik(lx, cc, ck, math.exp(s), 1.0),
        bounds=(-6.0, 4.0), method="bounded", options={"xatol": 1e-6})
    return GwParams(math.exp(res.x), 1.0)


def _check_identifiable(samples):
    obs = np.concatenate([s.observed for s in samples])
    if len(obs) < 2 or len(np.unique(obs)) < 2:
        raise DegenerateSampleError(
            f"need at least two distinct observed failures, got {len(np.unique(obs))}")


def em_fit(samples, config: FitConfig | None = None) -> FitResult:
    """Fit (theta, alpha) by EM to one hybrid-censored sample or to several
    samples pooled (the pooled log-likelihood is the sum over samples).

    Exhausting ``em_max_iter`` returns a result with ``converged=False``;
    an M-step that cannot ascend raises :class:`ConvergenceError`.
    """
    config = config or FitConfig()
    samples = _as_samples(samples)
    _check_identifiable(samples)
    lx, cc, ck = _pack(samples)
    init = config.init or _weibull_start(lx, cc, ck)
    size = config.em_max_iter + 2
    tr_t, tr_a, tr_l = np.empty(size), np.empty(size), np.empty(size)
    theta, alpha, n_iter, status = K.em_fit_kernel(
        lx, cc, ck, init.theta, init.alpha, *config.kernel_args(), tr_t, tr_a, tr_l)
    if status == K.STATUS_DIVERGED:
        raise ConvergenceError("M-step failed to increase the expected log-likelihood")
    trace = [(GwParams(tr_t[i], tr_a[i]), float(tr_l[i])) for i in range(n_iter + 1)]
    converged = status == K.STATUS_OK
    if not converged:
        log.warning("EM stopped after %d iterations without meeting em_tol=%g",
                    n_iter, config.em_tol)
    params = GwParams(theta, alpha)
    return FitResult(params, float(K.observed_loglik(lx, cc, ck, theta, alpha)),
                     int(n_iter), converged, trace, samples)


def quantile_mle(fit: FitResult, p: float) -> float:
    """Plug-in estimate of the p-th quantile at the fitted parameters."""
    if not fit.converged:
        raise ConvergenceError("quantile estimate requested from a non-converged fit")
    return quantile(p, fit.params)


def ks_statistic(data, params: GwParams) -> float:
    """Kolmogorov-Smirnov distance between the data and the fitted cdf."""
    x = np.sort(np.asarray(data, dtype=float))
    if x.size == 0:
        raise DomainError("data must be non-empty")
    n = x.size
    f = cdf(x, params)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
