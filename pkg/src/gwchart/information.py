"""Fisher information for hybrid-censored GW samples and quantile standard errors.

The missing-information principle splits the information in a censored
sample as ``observed = complete - missing``.  The complete part is what the
``n`` uncensored lifetimes would carry; the missing part is the information
each censored unit's unseen lifetime would add beyond the fact ``Y > c``.

Parameters are ordered (theta, alpha) throughout.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from . import _kernels as K
from .distribution import GwParams
from .estimation import FitResult, _as_samples, truncated_law
from .exceptions import ConvergenceError, DomainError, InformationError

__all__ = [
    "InfoKind",
    "InfoMatrix",
    "complete_info",
    "missing_info",
    "observed_info",
    "information_components",
    "quantile_gradient",
    "quantile_se",
]


class InfoKind(str, enum.Enum):
    COMPLETE = "complete"
    MISSING = "missing"
    OBSERVED = "observed"


@dataclass(frozen=True, eq=False)
class InfoMatrix:
    entries: np.ndarray
    kind: InfoKind

    def __post_init__(self):
        a = np.array(self.entries, dtype=float).reshape(2, 2)
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    def __getitem__(self, ij):
        return self.entries[ij]

    def __sub__(self, other: "InfoMatrix") -> "InfoMatrix":
        return InfoMatrix(self.entries - other.entries, InfoKind.OBSERVED)

    def is_positive_definite(self) -> bool:
        a = self.entries
        return a[0, 0] > 0 and a[0, 0] * a[1, 1] - a[0, 1] ** 2 > 0

    def inverse(self) -> np.ndarray:
        if not self.is_positive_definite():
            raise InformationError(f"{self.kind.value} information is not positive definite")
        return np.linalg.inv(self.entries)


def _quad(f, lo, hi, tol):
    val, _err = integrate.quad(f, lo, hi, epsabs=tol, epsrel=tol, limit=200)
    return val


def _quad_unit(f, tol):
    return _quad(f, 0.0, 0.5, tol) + _quad(f, 0.5, 1.0, tol)


def _xplog1m(w):
    """w + log(1 - w), accurate for small w."""
    if w < 1e-3:
        return -w * w * (0.5 + w * (1 / 3 + w * (0.25 + w * 0.2)))
    return w + math.log1p(-w)


def complete_info(n: int, params: GwParams, quad_tol: float = 1e-10) -> InfoMatrix:
    """Expected information of ``n`` complete observations.

    Written as integrals over ``z = exp(-Y**theta)`` in (0, 1).
    """
    if n < 0:
        raise DomainError("n must be >= 0")
    th, a = params.theta, params.alpha

    def f1(z):
        lz = math.log(z)
        return lz * math.log(-lz) ** 2 * (1.0 - z) ** (a - 1.0)

    def f2(z):
        lz, w = math.log(z), 1.0 - z
        return z * w ** (a - 3.0) * _xplog1m(w) * lz * math.log(-lz) ** 2

    def f3(z):
        lz = math.log(z)
        return z * lz * math.log(-lz) * (1.0 - z) ** (a - 2.0)

    a11 = n / th**2 - n * a / th**2 * _quad_unit(f1, quad_tol)
    if a != 1.0:
        a11 += n * (a - 1.0) * a / th**2 * _quad_unit(f2, quad_tol)
    a12 = n * a / th * _quad_unit(f3, quad_tol)
    a22 = n / a**2
    return InfoMatrix(np.array([[a11, a12], [a12, a22]]), InfoKind.COMPLETE)


def _neg_hessian_logpdf(y, params: GwParams) -> np.ndarray:
    """-d^2 log f(y) for each y; shape (len(y), 3) holding (h11, h12, h22)."""
    th, a = params.theta, params.alpha
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ly = np.log(y)
    u = y**th
    q = np.where(u > 1e-8, u / np.expm1(np.maximum(u, 1e-300)), 1.0 - u / 2)
    # u * q'(u) with q(u) = u / (e^u - 1)
    dq = np.where(u > 1e-8, q - q * q * np.exp(np.minimum(u, 700.0)), -u / 2)
    h11 = 1.0 / th**2 + ly**2 * (u - (a - 1.0) * dq)
    h12 = -q * ly
    h22 = np.full_like(y, 1.0 / a**2)
    return np.stack([h11, h12, h22], axis=-1)


def _truncated_neg_hessian(c, params: GwParams, quad_tol) -> np.ndarray:
    """E[-d^2 log f(Y) | Y > c] as (h11, h12, h22)."""
    try:
        point = truncated_law(c, params)
    except ConvergenceError as exc:
        raise InformationError(str(exc)) from None

    def entry(k):
        def f(s):
            lny = point(s)[1]
            return _neg_hessian_logpdf(math.exp(lny), params)[0, k]
        return _quad_unit(f, quad_tol)

    return np.array([entry(0), entry(1), 1.0 / params.alpha**2])


def _hessian_log_sf(c, params: GwParams) -> np.ndarray:
    """d^2 log S(c), S = 1 - F, as a 2x2 matrix."""
    th, a = params.theta, params.alpha
    ct = c**th
    e1 = math.exp(-ct)
    lz1 = K.log1mexp(ct)
    s = math.exp(K.log_sf_at(c, th, a))
    if s < 1e-300:
        raise InformationError(f"1 - F({c}) underflows")
    lc = math.log(c)
    z1p = e1 * ct * lc
    z1pp = e1 * ct * lc**2 * (1.0 - ct)
    za = math.exp(a * lz1)
    za1 = math.exp((a - 1.0) * lz1)
    za2 = math.exp((a - 2.0) * lz1)
    s_t = -a * za1 * z1p
    s_a = -za * lz1
    s_tt = -a * ((a - 1.0) * za2 * z1p**2 + za1 * z1pp)
    s_aa = -za * lz1**2
    s_ta = -za1 * z1p * (1.0 + a * lz1)
    g = np.array([s_t, s_a])
    h = np.array([[s_tt, s_ta], [s_ta, s_aa]])
    return h / s - np.outer(g, g) / s**2


def missing_info(n_censored: int, c: float, params: GwParams, quad_tol: float = 1e-10) -> InfoMatrix:
    """Information lost by censoring ``n_censored`` units at ``c``.

    Each unit contributes the variance of the complete-data score under
    ``Y | Y > c``, computed as ``E[-d^2 log f(Y) | Y > c] + d^2 log S(c)``.
    """
    if n_censored < 0:
        raise DomainError("n_censored must be >= 0")
    if n_censored == 0 or math.isinf(c):
        return InfoMatrix(np.zeros((2, 2)), InfoKind.MISSING)
    if not c > 0:
        raise DomainError("c must be > 0")
    h = _truncated_neg_hessian(c, params, quad_tol)
    b = np.array([[h[0], h[1]], [h[1], h[2]]]) + _hessian_log_sf(c, params)
    return InfoMatrix(n_censored * b, InfoKind.MISSING)


def information_components(samples, params: GwParams, method: str = "louis",
                           quad_tol: float = 1e-10):
    """(complete, missing, observed) information for one or several samples.

    ``method="louis"`` conditions the complete information on the data
    (observed failures enter through their own curvature), so the observed
    part equals the negative Hessian of the censored log-likelihood.
    ``method="expected"`` uses the unconditional complete information of
    ``n`` units instead, which agrees with it only on average.
    """
    if method not in ("louis", "expected"):
        raise DomainError("method must be 'louis' or 'expected'")
    samples = _as_samples(samples)
    comp = np.zeros((2, 2))
    miss = np.zeros((2, 2))
    for s in samples:
        k = s.n_censored
        if method == "expected":
            comp += complete_info(s.n, params, quad_tol).entries
        else:
            h = _neg_hessian_logpdf(s.observed, params).sum(axis=0) if s.d else np.zeros(3)
            if k:
                h = h + k * _truncated_neg_hessian(s.c, params, quad_tol)
            comp += np.array([[h[0], h[1]], [h[1], h[2]]])
        if k:
            miss += missing_info(k, s.c, params, quad_tol).entries
    complete = InfoMatrix(comp, InfoKind.COMPLETE)
    missing = InfoMatrix(miss, InfoKind.MISSING)
    return complete, missing, complete - missing


def observed_info(samples, params: GwParams, method: str = "louis",
                  quad_tol: float = 1e-10) -> InfoMatrix:
    observed = information_components(samples, params, method, quad_tol)[2]
    if not observed.is_positive_definite():
        raise InformationError("observed information is not positive definite")
    return observed


def quantile_gradient(p: float, params: GwParams) -> np.ndarray:
    """Gradient of the p-th quantile with respect to (theta, alpha)."""
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    th, a = params.theta, params.alpha
    lp = math.log(p)
    one_minus = -math.expm1(lp / a)
    big_l = -math.log1p(-math.exp(lp / a)) if lp / a < -math.log(2) else -math.log(one_minus)
    xi = big_l ** (1.0 / th)
    d_theta = -xi * math.log(big_l) / th**2
    d_alpha = xi / (th * big_l) * (-math.exp(lp / a) * lp / a**2) / one_minus
    return np.array([d_theta, d_alpha])


def quantile_se(fit: FitResult, p: float, m: int, method: str = "louis",
                quad_tol: float = 1e-10) -> float:
    """Delta-method standard error of the quantile estimate from a subgroup
    of size ``m``, using the per-unit information of the fitted sample(s)."""
    if m < 1:
        raise DomainError("m must be >= 1")
    info = observed_info(fit.samples, fit.params, method, quad_tol)
    per_unit = info.entries / fit.n
    g = quantile_gradient(p, fit.params)
    return float(math.sqrt(g @ np.linalg.solve(per_unit, g) / m))
