"""Monte-Carlo run-length studies for the quantile charts.

Random streams are addressed by key rather than drawn in sequence: chart
``j`` of a study uses ``SeedSequence(seed, spawn_key=(0, j))`` for its
phase-I data and ``(1, j)`` for its bootstrap, replication ``i`` uses
``(2, i)`` for its phase-II subgroups.  Results therefore do not depend on
how replications are spread over worker processes.

Three ways of obtaining the limits a replication monitors with:

``averaged``
    build ``n_charts`` charts from independent phase-I data and average
    their limits; every replication uses those averaged limits.
``regenerate``
    each replication builds its own chart from fresh phase-I data.
``fixed``
    one chart from one phase-I data set for all replications.
"""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .censoring import CensoringScheme, censor
from .charts import ChartConfig, ChartKind, ControlChart, build_bhc, build_shc
from .distribution import GwParams, sample
from .estimation import FitConfig
from .exceptions import DomainError

__all__ = [
    "PAPER_PARAMS",
    "SHIFT_GRID",
    "scheme_catalog",
    "SimDesign",
    "RunLengthSummary",
    "substream",
    "phase1_data",
    "build_chart",
    "study_chart",
    "preset_design",
    "run_length",
    "estimate_arl",
    "table1_report",
    "write_report",
]

PAPER_PARAMS = GwParams(0.51, 11.1)

# relative shifts (d_theta, d_alpha) as fractions of the in-control values
SHIFT_GRID = [(s, 0.0) for s in (-0.08, -0.04, 0.04, 0.08)] + \
             [(0.0, s) for s in (-0.08, -0.04, 0.04, 0.08)]

_CATALOG = [(25, 15, 55), (25, 20, 55), (40, 30, 55), (40, 35, 55),
            (25, 15, 70), (25, 20, 70), (40, 30, 70), (40, 35, 70)]

MODES = ("averaged", "regenerate", "fixed")


def scheme_catalog() -> list[CensoringScheme]:
    """The eight subgroup schemes (m, r, x0) of the simulation study, 1-based
    as scheme 1 ... scheme 8."""
    return [CensoringScheme.hybrid(m, r, x0) for m, r, x0 in _CATALOG]


def substream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


@dataclass(frozen=True)
class SimDesign:
    """One IC or OOC run-length study.

    ``shift`` is absolute: phase-II data come from
    GW(theta + delta_theta, alpha + delta_alpha).
    """

    true_params: GwParams
    chart_config: ChartConfig
    shift: tuple[float, float] = (0.0, 0.0)
    chart_kind: ChartKind = ChartKind.BHC
    replications: int = 1000
    run_length_cap: int | None = None
    mode: str = "averaged"
    n_charts: int = 100
    unassessable: str = "skip"
    scheme_id: int | None = None
    aggregate: str = "mean"

    def __post_init__(self):
        object.__setattr__(self, "chart_kind", ChartKind(self.chart_kind))
        object.__setattr__(self, "shift", tuple(float(s) for s in self.shift))
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.aggregate not in ("mean", "median"):
            raise DomainError("aggregate must be 'mean' or 'median'")
        if self.unassessable not in ("skip", "signal"):
            raise DomainError("unassessable must be 'skip' or 'signal'")
        if self.replications < 1 or self.n_charts < 1:
            raise DomainError("replications and n_charts must be >= 1")
        self.ooc_params  # validates positivity
        if self.run_length_cap is None:
            object.__setattr__(self, "run_length_cap", int(math.ceil(100 / self.chart_config.nu)))
        if self.run_length_cap < 10 / self.chart_config.nu:
            raise DomainError("run_length_cap must be at least 10 / nu")

    @property
    def ooc_params(self) -> GwParams:
        dt, da = self.shift
        th, al = self.true_params.theta + dt, self.true_params.alpha + da
        if not (th > 0 and al > 0):
            raise DomainError("shifted parameters must stay positive")
        return GwParams(th, al)

    @classmethod
    def relative(cls, true_params: GwParams, chart_config: ChartConfig,
                 rel_shift=(0.0, 0.0), **kw) -> "SimDesign":
        dt, da = rel_shift
        return cls(true_params, chart_config,
                   (dt * true_params.theta, da * true_params.alpha), **kw)

    def to_dict(self) -> dict:
        c = self.chart_config
        return {
            "true_params": {"theta": self.true_params.theta, "alpha": self.true_params.alpha},
            "shift": list(self.shift),
            "chart_kind": self.chart_kind.value,
            "chart_config": {"p": c.p, "nu": c.nu, "scheme": c.scheme.to_dict(), "k": c.k,
                             "B": c.B, "seed": c.seed, "hf_type": c.hf_type},
            "replications": self.replications,
            "run_length_cap": self.run_length_cap,
            "mode": self.mode,
            "n_charts": self.n_charts,
            "unassessable": self.unassessable,
            "scheme_id": self.scheme_id,
            "aggregate": self.aggregate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimDesign":
        c = d["chart_config"]
        config = ChartConfig(float(c["p"]), float(c["nu"]), CensoringScheme.from_dict(c["scheme"]),
                             int(c.get("k", 20)), int(c.get("B", 1000)), int(c.get("seed", 0)),
                             int(c.get("hf_type", 8)))
        tp = d.get("true_params", {"theta": PAPER_PARAMS.theta, "alpha": PAPER_PARAMS.alpha})
        return cls(GwParams(float(tp["theta"]), float(tp["alpha"])), config,
                   tuple(d.get("shift", (0.0, 0.0))), d.get("chart_kind", "BHC"),
                   int(d.get("replications", 1000)), d.get("run_length_cap"),
                   d.get("mode", "averaged"), int(d.get("n_charts", 100)),
                   d.get("unassessable", "skip"), d.get("scheme_id"),
                   d.get("aggregate", "mean"))


@dataclass(frozen=True, eq=False)
class RunLengthSummary:
    arl: float
    sdrl: float
    replications: int
    censored_runs: int
    design: SimDesign
    lcl: float
    ucl: float
    unassessable: int = 0
    params_hat: GwParams | None = None
    run_lengths: np.ndarray = field(default=None, repr=False)

    @property
    def se(self) -> float:
        """Monte-Carlo standard error of the ARL."""
        return self.sdrl / math.sqrt(self.replications)


def preset_design(scheme_id: int = 1, p: float = 0.5, nu: float = 0.0027,
                  rel_shift=(0.0, 0.0), paper_scale: bool = False, seed: int = 0,
                  chart_kind: ChartKind = ChartKind.BHC, mode: str = "averaged",
                  true_params: GwParams = PAPER_PARAMS, **kw) -> SimDesign:
    """A study on one of the catalogued schemes with k=20 phase-I subgroups.

    Desk scale uses B=1,000 and 1,000 replications over 100 averaged charts;
    ``paper_scale`` raises these to 5,000, 5,000 and 1,000.
    """
    if not 1 <= scheme_id <= len(_CATALOG):
        raise DomainError(f"scheme_id must be in 1..{len(_CATALOG)}")
    B, reps, n_charts = (5000, 5000, 1000) if paper_scale else (1000, 1000, 100)
    config = ChartConfig(p, nu, scheme_catalog()[scheme_id - 1], k=20,
                         B=kw.pop("B", B), seed=seed)
    kw.setdefault("replications", reps)
    kw.setdefault("n_charts", n_charts)
    return SimDesign.relative(true_params, config, rel_shift, chart_kind=chart_kind,
                              mode=mode, scheme_id=scheme_id, **kw)


# -- charts inside a study ---------------------------------------------------

def phase1_data(params: GwParams, config: ChartConfig, rng: np.random.Generator):
    return [censor(sample(params, config.m, rng), config.scheme) for _ in range(config.k)]


def build_chart(design: SimDesign, j: int, fit_config: FitConfig | None = None) -> ControlChart:
    """Chart number ``j`` of a study, from its own phase-I data and bootstrap streams."""
    config = design.chart_config
    seed = config.seed
    phase1 = phase1_data(design.true_params, config, substream(seed, 0, j))
    if design.chart_kind is ChartKind.BHC:
        return build_bhc(phase1, config, fit_config, rng=substream(seed, 1, j))
    return build_shc(phase1, config, fit_config)


def _build_range(args):
    design, js, fit_config = args
    return [build_chart(design, j, fit_config) for j in js]


def _map(fn, jobs, workers):
    if workers <= 1 or len(jobs) < 2:
        return [fn(job) for job in jobs]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(fn, jobs))


def _split(n, workers):
    return [list(c) for c in np.array_split(np.arange(n), max(1, min(workers, n))) if len(c)]


def _build_charts(design, n, fit_config, workers):
    parts = _map(_build_range, [(design, js, fit_config) for js in _split(n, workers)], workers)
    return [c for part in parts for c in part]


# -- run lengths ---------------------------------------------------------------

def run_length(chart: ControlChart, ooc_params: GwParams, scheme: CensoringScheme,
               rng: np.random.Generator, cap: int, fit_config: FitConfig | None = None,
               unassessable: str = "skip", chunk: int = 256) -> tuple[int, bool, int]:
    """Monitor subgroups from GW(ooc_params) until the first signal.

    Returns (run length, whether the run was cut at ``cap``, number of
    unassessable subgroups met).
    """
    fit_config = fit_config or FitConfig()
    init = fit_config.init or chart.params
    args = fit_config.kernel_args()
    seen = bad = 0
    while seen < cap:
        rows = min(chunk, cap - seen)
        u = rng.random((rows, scheme.n))
        idx, b = K.first_signal(u, ooc_params.theta, ooc_params.alpha, scheme.r, scheme.x0,
                                init.theta, init.alpha, *args, chart.config.p,
                                chart.lcl, chart.ucl, unassessable == "signal")
        bad += b
        if idx >= 0:
            return seen + idx + 1, False, bad
        seen += rows
    return cap, True, bad


def _run_range(args):
    design, charts, reps, fit_config = args
    out = []
    for chart, i in zip(charts, reps):
        out.append(run_length(chart, design.ooc_params, design.chart_config.scheme,
                              substream(design.chart_config.seed, 2, i),
                              design.run_length_cap, fit_config, design.unassessable))
    return out


def _averaged_chart(charts: list[ControlChart], aggregate: str = "mean") -> ControlChart:
    """Combine the limits of several charts by their mean or median."""
    first = charts[0]
    f = np.mean if aggregate == "mean" else np.median
    rows = np.array([[c.lcl, c.cl, c.ucl, c.params.theta, c.params.alpha] for c in charts])
    lcl, cl, ucl, theta, alpha = (float(v) for v in f(rows, axis=0))
    return ControlChart(first.kind, lcl, cl, ucl, GwParams(theta, alpha), first.config,
                        extra={"n_charts": len(charts), "aggregate": aggregate})


def estimate_arl(design: SimDesign, fit_config: FitConfig | None = None, workers: int = 1,
                 chart: ControlChart | None = None) -> RunLengthSummary:
    """ARL and SDRL over ``design.replications`` independent runs.

    ``chart`` overrides the study's own chart (in the ``averaged`` and
    ``fixed`` modes) so that IC and OOC studies can share limits.
    """
    reps = list(range(design.replications))
    if design.mode == "regenerate":
        charts = _build_charts(design, design.replications, fit_config, workers)
        summary_chart = _averaged_chart(charts, design.aggregate)
    else:
        if chart is None:
            n = design.n_charts if design.mode == "averaged" else 1
            chart = _averaged_chart(_build_charts(design, n, fit_config, workers), design.aggregate)
        charts = [chart] * len(reps)
        summary_chart = chart
    jobs = [(design, [charts[i] for i in js], js, fit_config) for js in _split(len(reps), workers)]
    results = [r for part in _map(_run_range, jobs, workers) for r in part]
    rl = np.array([r[0] for r in results], dtype=float)
    return RunLengthSummary(
        arl=float(rl.mean()),
        sdrl=float(rl.std(ddof=1)) if len(rl) > 1 else 0.0,
        replications=len(rl),
        censored_runs=int(sum(r[1] for r in results)),
        design=design,
        lcl=summary_chart.lcl,
        ucl=summary_chart.ucl,
        unassessable=int(sum(r[2] for r in results)),
        params_hat=summary_chart.params,
        run_lengths=rl,
    )


def study_chart(design: SimDesign, fit_config: FitConfig | None = None,
                workers: int = 1) -> ControlChart:
    """The (averaged or single) chart an ``averaged``/``fixed`` study monitors with."""
    if design.mode == "regenerate":
        raise DomainError("a regenerate study has no single chart")
    n = design.n_charts if design.mode == "averaged" else 1
    return _averaged_chart(_build_charts(design, n, fit_config, workers), design.aggregate)


# -- reports -------------------------------------------------------------------

REPORT_COLUMNS = ["scheme_id", "m", "r", "x0", "p", "nu", "delta_theta", "delta_alpha",
                  "theta_hat", "alpha_hat", "lcl", "ucl", "arl", "sdrl", "reps", "capped"]


def _row(s: RunLengthSummary) -> dict:
    d = s.design
    c = d.chart_config
    return {
        "scheme_id": "" if d.scheme_id is None else d.scheme_id,
        "m": c.m,
        "r": c.scheme.r,
        "x0": c.scheme.x0,
        "p": c.p,
        "nu": c.nu,
        "delta_theta": d.shift[0],
        "delta_alpha": d.shift[1],
        "theta_hat": s.params_hat.theta if s.params_hat else "",
        "alpha_hat": s.params_hat.alpha if s.params_hat else "",
        "lcl": s.lcl,
        "ucl": s.ucl,
        "arl": s.arl,
        "sdrl": s.sdrl,
        "reps": s.replications,
        "capped": s.censored_runs,
    }


def table1_report(designs, fit_config: FitConfig | None = None, workers: int = 1):
    """Run IC designs and return (rows, summaries); rows follow REPORT_COLUMNS."""
    summaries = []
    for d in designs:
        if d.shift != (0.0, 0.0):
            raise DomainError("table1_report takes in-control designs only")
        summaries.append(estimate_arl(d, fit_config, workers))
    return [_row(s) for s in summaries], summaries


def write_report(fh, summaries) -> None:
    def fmt(v):
        return f"{v:.6g}" if isinstance(v, float) else str(v)

    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for s in summaries:
        row = _row(s)
        w.writerow([fmt(row[k]) for k in REPORT_COLUMNS])


def designs_json(designs) -> str:
    return json.dumps([d.to_dict() for d in designs], indent=2)
