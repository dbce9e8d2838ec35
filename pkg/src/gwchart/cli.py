"""Command-line interface: ``gwchart fit | chart build | monitor | simulate | example``.

Exit codes: 0 success, 1 input error, 2 numerical failure, 3 (monitor only)
at least one subgroup signalled.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys

import numpy as np

from .censoring import CensoringScheme, censor
from .charts import (ChartConfig, ChartKind, ControlChart, build_bhc, build_shc, monitor,
                     write_verdicts)
from .datasets import load_bladder, read_values
from .distribution import GwParams, quantile, sample
from .estimation import FitConfig, em_fit, ks_statistic
from .exceptions import ConvergenceError, DegenerateSampleError, DomainError, GwChartError
from .simulation import (SHIFT_GRID, SimDesign, designs_json, estimate_arl, preset_design,
                         scheme_catalog, study_chart, write_report)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_SIGNAL = 0, 1, 2, 3

log = logging.getLogger("gwchart")


class InputError(Exception):
    pass


def _g(x) -> str:
    return f"{x:.6g}"


# -- input helpers ---------------------------------------------------------------

def read_data(path: str) -> np.ndarray:
    if path == "bladder":
        return load_bladder(125)
    if path == "bladder128":
        return load_bladder(128)
    try:
        with open(path, newline="") as fh:
            x = read_values(fh)
    except OSError as exc:
        raise InputError(str(exc)) from None
    except DomainError as exc:
        raise InputError(f"{path}: {exc}") from None
    if len(x) < 2:
        raise InputError(f"{path}: need at least two values")
    if np.any(~np.isfinite(x)) or np.any(x <= 0):
        raise InputError(f"{path}: lifetimes must be finite and positive")
    return x


def _scheme(kind: str, n: int, r: int | None, x0: float | None) -> CensoringScheme:
    try:
        if kind == "none":
            return CensoringScheme.complete(n)
        if kind == "hybrid":
            if r is None or x0 is None:
                raise InputError("hybrid censoring needs --r and --x0")
            return CensoringScheme.hybrid(n, r, x0)
        if kind == "type1":
            if x0 is None:
                raise InputError("type1 censoring needs --x0")
            return CensoringScheme.type_i(n, x0)
        if r is None:
            raise InputError("type2 censoring needs --r")
        return CensoringScheme.type_ii(n, r)
    except DomainError as exc:
        raise InputError(str(exc)) from None


def _fit_config(args) -> FitConfig:
    return FitConfig(em_tol=args.em_tol, em_max_iter=args.em_max_iter, quad_tol=args.quad_tol,
                     accelerate=not args.no_accelerate)


def _add_fit_flags(p):
    g = p.add_argument_group("fitting")
    g.add_argument("--em-tol", type=float, default=1e-6)
    g.add_argument("--em-max-iter", type=int, default=500)
    g.add_argument("--quad-tol", type=float, default=1e-8)
    g.add_argument("--no-accelerate", action="store_true", help="plain EM iterations")


def _add_scheme_flags(p, prefix="", required_kind=False):
    p.add_argument(f"--{prefix}censoring", choices=["none", "hybrid", "type1", "type2"],
                   default=None if required_kind else "none")
    p.add_argument(f"--{prefix}r", type=int)
    p.add_argument(f"--{prefix}x0", type=float)


# -- fit ---------------------------------------------------------------------

def fit_summary(x, scheme, fit_config):
    s = censor(np.sort(x), scheme)
    fit = em_fit(s, fit_config)
    out = fit.to_dict()
    out["c"] = s.c
    out["ks"] = ks_statistic(x, fit.params)
    out["scheme"] = scheme.to_dict()
    return fit, out


def cmd_fit(args) -> int:
    x = read_data(args.data)
    if args.n is not None and args.n != len(x):
        raise InputError(f"--n {args.n} does not match the {len(x)} values in {args.data}")
    scheme = _scheme(args.censoring, len(x), args.r, args.x0)
    fit, out = fit_summary(x, scheme, _fit_config(args))
    print(json.dumps(out, indent=2))
    return EXIT_OK if fit.converged else EXIT_NUMERIC


# -- chart build -------------------------------------------------------------

def _phase1(x, k, m, scheme):
    if len(x) < k * m:
        raise InputError(f"need k*m = {k * m} values, file has {len(x)}")
    return [censor(np.sort(x[j * m:(j + 1) * m]), scheme) for j in range(k)]


def build_from_data(x, kind, config, fit_config, ref_scheme=None, workers=1):
    phase1 = _phase1(x, config.k, config.m, config.scheme)
    ref = None
    if ref_scheme is not None:
        ref = em_fit(censor(np.sort(x[:config.k * config.m]), ref_scheme), fit_config)
        if not ref.converged:
            raise ConvergenceError("reference fit did not converge")
    if kind is ChartKind.BHC:
        return build_bhc(phase1, config, fit_config, ref, workers=workers)
    return build_shc(phase1, config, fit_config, ref)


def cmd_chart_build(args) -> int:
    x = read_data(args.data)
    kind = ChartKind(args.kind.upper())
    try:
        scheme = _scheme(args.censoring, args.m, args.r, args.x0)
        config = ChartConfig(args.p, args.nu, scheme, args.k, args.B, args.seed)
    except DomainError as exc:
        raise InputError(str(exc)) from None
    ref_scheme = None
    if args.reference_censoring:
        ref_scheme = _scheme(args.reference_censoring, args.k * args.m, args.reference_r,
                             args.reference_x0)
    chart = build_from_data(x, kind, config, _fit_config(args), ref_scheme, args.workers)
    if args.out:
        chart.to_json(args.out)
    print(f"{kind.value} p={_g(args.p)} nu={_g(args.nu)}: "
          f"LCL={_g(chart.lcl)} CL={_g(chart.cl)} UCL={_g(chart.ucl)} "
          f"(theta_hat={_g(chart.params.theta)}, alpha_hat={_g(chart.params.alpha)})")
    return EXIT_OK


# -- monitor -----------------------------------------------------------------

def cmd_monitor(args) -> int:
    try:
        chart = ControlChart.from_json(args.chart)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(f"cannot read chart {args.chart}: {exc}") from None
    m = chart.config.m
    groups = []
    for path in args.subgroups:
        x = read_data(path)
        if len(x) != m:
            raise InputError(f"{path}: expected {m} values, got {len(x)}")
        groups.append(x)
    verdicts = [monitor(chart, g, _fit_config(args)) for g in groups]
    buf = io.StringIO()
    write_verdicts(buf, chart, verdicts)
    _emit(args.out, buf.getvalue())
    return EXIT_SIGNAL if any(v.out_of_control for v in verdicts) else EXIT_OK


# -- simulate ----------------------------------------------------------------

def _emit(path, text):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _floats(text):
    return [float(t) for t in text.split(",")] if text else None


def _designs(args):
    """(designs, whether they share the first design's chart)."""
    overrides = {}
    if args.reps is not None:
        overrides["replications"] = args.reps
    if args.n_charts is not None:
        overrides["n_charts"] = args.n_charts
    if args.B is not None:
        overrides["B"] = args.B
    common = dict(paper_scale=args.paper_scale, seed=args.seed or 0, mode=args.mode or "averaged",
                  chart_kind=ChartKind(args.kind.upper()), **overrides)
    schemes = [args.scheme] if args.scheme else list(range(1, 9))
    ps = _floats(args.p) or [0.1, 0.5, 0.9]
    nus = _floats(args.nu) or [0.005, 0.0027, 0.002]
    shifts = list(SHIFT_GRID) if args.preset == "shifts" else []
    if args.delta_theta or args.delta_alpha:
        shifts.append((args.delta_theta, args.delta_alpha))
    if args.preset == "table1" or not shifts:
        # in-control grid
        return [preset_design(s, p, nu, **common) for s in schemes for p in ps for nu in nus], False
    s, p, nu = schemes[0], ps[0], nus[0]
    designs = [preset_design(s, p, nu, **common)]
    designs += [preset_design(s, p, nu, rel_shift=sh, **common) for sh in shifts]
    return designs, True


def _design_file(args):
    with open(args.design) as fh:
        raw = json.load(fh)
    raw = raw if isinstance(raw, list) else [raw]
    designs = []
    for d in raw:
        # flags override the file
        if args.reps is not None:
            d["replications"] = args.reps
        if args.seed is not None:
            d["chart_config"]["seed"] = args.seed
        if args.mode is not None:
            d["mode"] = args.mode
        designs.append(SimDesign.from_dict(d))
    return designs


def cmd_simulate(args) -> int:
    if args.preset == "schemes":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme_id", "m", "r", "x0"])
        for i, s in enumerate(scheme_catalog(), start=1):
            w.writerow([i, s.n, s.r, _g(s.x0)])
        _emit(args.out, buf.getvalue())
        return EXIT_OK
    try:
        if args.design:
            designs, shared = _design_file(args), False
        else:
            designs, shared = _designs(args)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from None
    summaries = []
    chart = None
    if shared and designs[0].mode != "regenerate":
        chart = study_chart(designs[0], workers=args.workers)
    for d in designs:
        summaries.append(estimate_arl(d, workers=args.workers, chart=chart))
        log.info("design done: shift=%s arl=%.4g", d.shift, summaries[-1].arl)
    if args.echo:
        with open(args.echo, "w") as fh:
            fh.write(designs_json(designs) + "\n")
    buf = io.StringIO()
    write_report(buf, summaries)
    _emit(args.out, buf.getvalue())
    return EXIT_OK


# -- example -------------------------------------------------------------------

def run_example(B=5000, seed=1, workers=1, out_dir=None, n_test=20, fit_config=None):
    """The remission-time example: fits, the four charts for the 90th
    percentile and twenty phase-II subgroups with theta lowered by 15%."""
    fit_config = fit_config or FitConfig()
    x = load_bladder(125)
    n, p, nu, k, m = len(x), 0.9, 0.0027, 5, 25
    report = {"n": n}
    fits = {}
    for name, scheme in [("complete", CensoringScheme.complete(n)),
                         ("hybrid", CensoringScheme.hybrid(n, 75, 7.6)),
                         ("type1", CensoringScheme.type_i(n, 7.6)),
                         ("type2", CensoringScheme.type_ii(n, 75))]:
        fit, summary = fit_summary(x, scheme, fit_config)
        fits[name] = fit
        report[f"fit_{name}"] = summary
    recipes = [
        ("BHC", ChartKind.BHC, CensoringScheme.hybrid(m, 15, 7.6), "hybrid"),
        ("SHC", ChartKind.SHC, CensoringScheme.hybrid(m, 15, 7.6), "hybrid"),
        ("BT1C", ChartKind.BHC, CensoringScheme.type_i(m, 7.6), "type1"),
        ("BT2C", ChartKind.BHC, CensoringScheme.type_ii(m, 15), "type2"),
    ]
    charts = {}
    for label, kind, scheme, ref in recipes:
        config = ChartConfig(p, nu, scheme, k, B, seed)
        phase1 = _phase1(x, k, m, scheme)
        if kind is ChartKind.BHC:
            chart = build_bhc(phase1, config, fit_config, fits[ref], workers=workers)
        else:
            chart = build_shc(phase1, config, fit_config, fits[ref])
        charts[label] = chart
        report[label] = {"lcl": chart.lcl, "cl": chart.cl, "ucl": chart.ucl,
                         "xi_hat": quantile(p, chart.params)}
    # phase II: theta down 15% from the hybrid estimate, alpha unchanged
    th = fits["hybrid"].params
    ooc = GwParams(0.85 * th.theta, th.alpha)
    rng = np.random.default_rng(seed)
    tests = [np.sort(sample(ooc, m, rng)) for _ in range(n_test)]
    for label, chart in charts.items():
        verdicts = [monitor(chart, t, fit_config) for t in tests]
        signals = [i + 1 for i, v in enumerate(verdicts) if v.out_of_control]
        report[label]["signals"] = signals
        if out_dir:
            with open(os.path.join(out_dir, f"{label.lower()}_verdicts.csv"), "w") as fh:
                write_verdicts(fh, chart, verdicts)
            chart.to_json(os.path.join(out_dir, f"{label.lower()}_chart.json"))
    return report


def cmd_example(args) -> int:
    if args.out_dir:
        os.makedirs(args.out_dir, exist_ok=True)
    report = run_example(args.B, args.seed, args.workers, args.out_dir, fit_config=_fit_config(args))
    for name in ("complete", "hybrid", "type1", "type2"):
        f = report[f"fit_{name}"]
        print(f"fit {name:8s} theta={_g(f['theta'])} alpha={_g(f['alpha'])} "
              f"loglik={_g(f['loglik'])} D={_g(f['ks'])}")
    for label in ("BHC", "SHC", "BT1C", "BT2C"):
        c = report[label]
        print(f"{label:4s} LCL={_g(c['lcl'])} CL={_g(c['cl'])} UCL={_g(c['ucl'])} "
              f"signals={c['signals']}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(report, fh, indent=2)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gwchart", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit (theta, alpha) to a lifetime file")
    p.add_argument("data", help="CSV of lifetimes, or 'bladder' for the bundled data")
    p.add_argument("--n", type=int, help="expected number of units (checked against the file)")
    _add_scheme_flags(p)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_fit)

    chart = sub.add_parser("chart", help="control charts").add_subparsers(dest="chart_cmd", required=True)
    p = chart.add_parser("build", help="build a BHC or SHC chart from phase-I data")
    p.add_argument("data", help="phase-I lifetimes, split in file order into k subgroups of m")
    p.add_argument("--kind", choices=["bhc", "shc"], default="bhc")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--nu", type=float, default=0.0027)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--B", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="write the chart as JSON")
    _add_scheme_flags(p)
    _add_scheme_flags(p, "reference-", required_kind=True)
    _add_fit_flags(p)
    p.set_defaults(func=cmd_chart_build)

    p = sub.add_parser("monitor", help="classify phase-II subgroups against a chart")
    p.add_argument("--chart", required=True)
    p.add_argument("subgroups", nargs="+", help="one CSV of m lifetimes per subgroup")
    p.add_argument("--out", help="verdict CSV (default stdout)")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("simulate", help="Monte-Carlo ARL studies")
    p.add_argument("--preset", choices=["table1", "schemes", "shifts"])
    p.add_argument("--design", help="JSON design file (flags override it)")
    p.add_argument("--scheme", type=int, help="scheme id 1..8")
    p.add_argument("--p", help="comma-separated quantile levels")
    p.add_argument("--nu", help="comma-separated false-alarm rates")
    p.add_argument("--delta-theta", type=float, default=0.0, help="relative shift in theta")
    p.add_argument("--delta-alpha", type=float, default=0.0, help="relative shift in alpha")
    p.add_argument("--kind", choices=["bhc", "shc"], default="bhc")
    p.add_argument("--mode", choices=["averaged", "regenerate", "fixed"],
                   help="how replications obtain limits (default averaged)")
    p.add_argument("--reps", type=int)
    p.add_argument("--B", type=int)
    p.add_argument("--n-charts", type=int)
    p.add_argument("--paper-scale", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", help="report CSV (default stdout)")
    p.add_argument("--echo", help="write the designs as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("example", help="reproduce the remission-time example")
    p.add_argument("--B", type=int, default=5000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out-dir", help="write charts and verdict CSVs here")
    p.add_argument("--json", help="write the full report as JSON")
    _add_fit_flags(p)
    p.set_defaults(func=cmd_example)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConvergenceError, DegenerateSampleError, GwChartError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
