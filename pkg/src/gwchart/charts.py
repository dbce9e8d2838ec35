"""Control charts for a lifetime quantile under hybrid censoring.

Two constructions share the same phase-I fit:

* BHC (bootstrap): resample subgroups from the fitted GW law, censor and
  refit each, and take the nu/2 and 1 - nu/2 empirical quantiles of the
  refitted quantile estimates as limits (median as centre line).
* SHC (Shewhart): centre line at the mean of per-subgroup estimates, limits
  at +-z * SE with the delta-method standard error.
"""
from __future__ import annotations

import csv
import enum
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .censoring import CensoringScheme, HybridCensoredSample, censor
from .distribution import GwParams, quantile
from .estimation import FitConfig, FitResult, em_fit
from .exceptions import ConvergenceError, DegenerateSampleError, DomainError
from .information import quantile_se

log = logging.getLogger(__name__)

__all__ = [
    "HF_METHODS",
    "empirical_quantile",
    "ChartKind",
    "ChartConfig",
    "ControlChart",
    "Signal",
    "MonitorVerdict",
    "bootstrap_statistics",
    "build_bhc",
    "build_shc",
    "classify",
    "monitor",
    "write_verdicts",
]

# Hyndman-Fan sample-quantile definitions as named by numpy
HF_METHODS = {
    4: "interpolated_inverted_cdf",
    5: "hazen",
    6: "weibull",
    7: "linear",
    8: "median_unbiased",
    9: "normal_unbiased",
}


def empirical_quantile(values, q, hf_type: int = 8):
    """Sample quantile of Hyndman-Fan type ``hf_type`` (4 to 9)."""
    if hf_type not in HF_METHODS:
        raise DomainError(f"hf_type must be one of {sorted(HF_METHODS)}")
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("no values")
    if np.any(np.asarray(q) < 0) or np.any(np.asarray(q) > 1):
        raise DomainError("q must lie in [0, 1]")
    out = np.quantile(v, q, method=HF_METHODS[hf_type])
    return float(out) if np.ndim(out) == 0 else out


class ChartKind(str, enum.Enum):
    BHC = "BHC"
    SHC = "SHC"


@dataclass(frozen=True)
class ChartConfig:
    """Design of a chart: monitored quantile ``p``, false-alarm rate ``nu``,
    ``k`` phase-I subgroups of size ``m`` and the per-subgroup scheme."""

    p: float
    nu: float
    scheme: CensoringScheme
    k: int = 5
    B: int = 5000
    seed: int = 0
    hf_type: int = 8

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise DomainError("p must lie in (0, 1)")
        if not 0 < self.nu < 1:
            raise DomainError("nu must lie in (0, 1)")
        if self.k < 1 or self.B < 1:
            raise DomainError("k and B must be >= 1")
        if self.hf_type not in HF_METHODS:
            raise DomainError(f"hf_type must be one of {sorted(HF_METHODS)}")

    @property
    def m(self) -> int:
        return self.scheme.n


@dataclass(frozen=True, eq=False)
class ControlChart:
    kind: ChartKind
    lcl: float
    cl: float
    ucl: float
    params: GwParams
    config: ChartConfig
    phase1_fit: FitResult | None = field(default=None, repr=False)
    extra: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.lcl <= self.cl <= self.ucl:
            raise DomainError(f"limits out of order: {self.lcl}, {self.cl}, {self.ucl}")

    def to_dict(self) -> dict:
        c = self.config
        return {
            "kind": self.kind.value,
            "p": c.p,
            "nu": c.nu,
            "scheme": c.scheme.to_dict(),
            "lcl": self.lcl,
            "cl": self.cl,
            "ucl": self.ucl,
            "theta_hat": self.params.theta,
            "alpha_hat": self.params.alpha,
            "B": c.B,
            "seed": c.seed,
            "k": c.k,
            "hf_type": c.hf_type,
            **self.extra,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text + "\n")
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "ControlChart":
        known = {"kind", "p", "nu", "scheme", "lcl", "cl", "ucl", "theta_hat",
                 "alpha_hat", "B", "seed", "k", "hf_type"}
        config = ChartConfig(float(d["p"]), float(d["nu"]),
                             CensoringScheme.from_dict(d["scheme"]),
                             int(d.get("k", 5)), int(d.get("B", 1)),
                             int(d.get("seed", 0)), int(d.get("hf_type", 8)))
        return cls(ChartKind(d["kind"]), float(d["lcl"]), float(d["cl"]), float(d["ucl"]),
                   GwParams(float(d["theta_hat"]), float(d["alpha_hat"])), config,
                   extra={k: v for k, v in d.items() if k not in known})

    @classmethod
    def from_json(cls, text_or_path) -> "ControlChart":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


class Signal(str, enum.Enum):
    IN_CONTROL = "in_control"
    LOW = "out_of_control_low"
    HIGH = "out_of_control_high"
    UNASSESSABLE = "unassessable"


@dataclass(frozen=True)
class MonitorVerdict:
    statistic: float
    signal: Signal
    reason: str = ""

    @property
    def out_of_control(self) -> bool:
        return self.signal in (Signal.LOW, Signal.HIGH)


# -- bootstrap --------------------------------------------------------------

def _fit_chunk(args):
    u, params, scheme, init, fit_config = args
    return K.fit_rows(u, params.theta, params.alpha, scheme.r, scheme.x0,
                      init.theta, init.alpha, *fit_config.kernel_args())


def _fit_uniform_rows(u, params, scheme, init, fit_config, workers):
    if workers <= 1 or len(u) < 2 * workers:
        return _fit_chunk((u, params, scheme, init, fit_config))
    chunks = np.array_split(u, workers)
    with ProcessPoolExecutor(workers) as pool:
        parts = list(pool.map(_fit_chunk, [(c, params, scheme, init, fit_config) for c in chunks]))
    return tuple(np.concatenate(x) for x in zip(*parts))


def bootstrap_statistics(params: GwParams, scheme: CensoringScheme, p: float, B: int,
                         rng: np.random.Generator, fit_config: FitConfig | None = None,
                         workers: int = 1, max_rounds: int = 50):
    """``B`` parametric-bootstrap quantile estimates, plus the number of
    resamples that had to be redrawn because they could not be fitted.

    Uniforms come from ``rng`` in blocks, so the result depends only on the
    generator state, not on ``workers``.
    """
    fit_config = fit_config or FitConfig()
    init = fit_config.init or params
    out = np.empty(0)
    redrawn = 0
    need = B
    for _ in range(max_rounds):
        u = rng.random((need, scheme.n))
        th, al, st = _fit_uniform_rows(u, params, scheme, init, fit_config, workers)
        ok = st == K.STATUS_OK
        xi = np.array([K.gw_quantile(p, t, a) for t, a in zip(th[ok], al[ok])])
        out = np.concatenate([out, xi])
        need = B - len(out)
        if need == 0:
            return out, redrawn
        redrawn += need
    raise ConvergenceError(f"only {len(out)} of {B} bootstrap resamples could be fitted")


def _reference_fit(phase1, fit_config, reference_fit):
    if reference_fit is not None:
        return reference_fit
    fit = em_fit(phase1, fit_config)
    if not fit.converged:
        raise ConvergenceError("phase-I fit did not converge")
    return fit


def _check_phase1(phase1, config):
    phase1 = tuple(phase1)
    if len(phase1) != config.k:
        raise DomainError(f"expected k={config.k} phase-I subgroups, got {len(phase1)}")
    return phase1


def build_bhc(phase1: Sequence[HybridCensoredSample], config: ChartConfig,
              fit_config: FitConfig | None = None, reference_fit: FitResult | None = None,
              workers: int = 1, rng: np.random.Generator | None = None) -> ControlChart:
    """Bootstrap chart.

    The GW law is fitted to the pooled phase-I subgroups unless
    ``reference_fit`` supplies that fit (for instance one made on the whole
    phase-I sample under a different scheme).  Resamples are drawn from
    ``rng`` when given, otherwise from a generator seeded with ``config.seed``.
    """
    fit_config = fit_config or FitConfig()
    phase1 = _check_phase1(phase1, config)
    fit = _reference_fit(phase1, fit_config, reference_fit)
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    xi, redrawn = bootstrap_statistics(fit.params, config.scheme, config.p, config.B,
                                       rng, fit_config, workers)
    lcl, cl, ucl = empirical_quantile(xi, [config.nu / 2, 0.5, 1 - config.nu / 2],
                                      config.hf_type)
    if redrawn:
        log.info("redrew %d of %d bootstrap resamples", redrawn, config.B)
    return ControlChart(ChartKind.BHC, float(lcl), float(cl), float(ucl), fit.params,
                        config, fit, {"redrawn": redrawn})


def build_shc(phase1: Sequence[HybridCensoredSample], config: ChartConfig,
              fit_config: FitConfig | None = None, reference_fit: FitResult | None = None,
              se_method: str = "louis") -> ControlChart:
    """Shewhart chart: mean of subgroup quantile estimates +- z * SE."""
    fit_config = fit_config or FitConfig()
    phase1 = _check_phase1(phase1, config)
    fit = _reference_fit(phase1, fit_config, reference_fit)
    sub = []
    for j, s in enumerate(phase1):
        f = em_fit(s, fit_config.with_init(fit_config.init or fit.params))
        if not f.converged:
            raise ConvergenceError(f"phase-I subgroup {j} fit did not converge")
        sub.append(quantile(config.p, f.params))
    cl = float(np.mean(sub))
    se = quantile_se(fit, config.p, config.m, se_method)
    z = float(stats.norm.ppf(1 - config.nu / 2))
    return ControlChart(ChartKind.SHC, cl - z * se, cl, cl + z * se, fit.params, config,
                        fit, {"se": se, "subgroup_estimates": sub})


# -- phase II ---------------------------------------------------------------

def classify(chart: ControlChart, statistic: float) -> Signal:
    if not math.isfinite(statistic):
        return Signal.UNASSESSABLE
    if statistic > chart.ucl:
        return Signal.HIGH
    if statistic < chart.lcl:
        return Signal.LOW
    return Signal.IN_CONTROL


def monitor(chart: ControlChart, subgroup, fit_config: FitConfig | None = None) -> MonitorVerdict:
    """Fit a phase-II subgroup and compare its quantile estimate with the limits.

    ``subgroup`` is a censored sample or a complete sample of size m, which
    is censored with the chart's scheme.
    """
    if not isinstance(subgroup, HybridCensoredSample):
        subgroup = censor(np.sort(np.asarray(subgroup, dtype=float)), chart.config.scheme)
    fit_config = fit_config or FitConfig()
    try:
        fit = em_fit(subgroup, fit_config.with_init(fit_config.init or chart.params))
    except (DegenerateSampleError, ConvergenceError) as exc:
        return MonitorVerdict(math.nan, Signal.UNASSESSABLE, str(exc))
    if not fit.converged:
        return MonitorVerdict(math.nan, Signal.UNASSESSABLE, "fit did not converge")
    xi = quantile(chart.config.p, fit.params)
    return MonitorVerdict(xi, classify(chart, xi))


def write_verdicts(fh, chart: ControlChart, verdicts: Iterable[MonitorVerdict]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "statistic", "lcl", "cl", "ucl", "signal"])
    for i, v in enumerate(verdicts, start=1):
        w.writerow([i, f"{v.statistic:.6g}", f"{chart.lcl:.6g}", f"{chart.cl:.6g}",
                    f"{chart.ucl:.6g}", v.signal.value])
