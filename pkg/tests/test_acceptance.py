"""Acceptance gate: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines. Reference
values for the estimators come from tests/oracles.py, never from the code
under test.
"""
import math

import numpy as np
import pytest

from gwchart import cli
from gwchart.censoring import CensoringScheme, censor
from gwchart.charts import ChartConfig, build_bhc
from gwchart.distribution import (GwParams, burr_x, cdf, generalized_exponential, pdf, quantile,
                                  rayleigh, sample, weibull)
from gwchart.estimation import (FitConfig, conditional_A, conditional_B, conditional_C, em_fit,
                                ks_statistic)
from gwchart.information import observed_info, quantile_gradient, quantile_se
from gwchart.simulation import (PAPER_PARAMS, SHIFT_GRID, estimate_arl, preset_design,
                                study_chart, write_report)

from oracles import censored_loglik, direct_mle, fd_gradient, fd_hessian, truncated_draws

pytestmark = pytest.mark.slow


def verdict(n, ok, detail):
    print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
    assert ok, detail


def _fd_rel(f, x, h):
    return (f(x + h) - f(x - h)) / (2 * h)


# -- 1 -----------------------------------------------------------------------

def test_criterion_1_distribution():
    rng = np.random.default_rng(1)
    p = rng.uniform(1e-6, 1 - 1e-6, 1000)
    th = np.exp(rng.uniform(math.log(0.2), math.log(5), 1000))
    al = np.exp(rng.uniform(math.log(0.1), math.log(20), 1000))
    inv = max(abs(float(cdf(quantile(pi, GwParams(t, a)), GwParams(t, a))) - pi)
              for pi, t, a in zip(p, th, al))

    fd = 0.0
    for t, a in zip(th[:200], al[:200]):
        par = GwParams(t, a)
        x = float(quantile(rng.uniform(0.05, 0.95), par))
        h = 1e-5 * x
        num = _fd_rel(lambda v: float(cdf(v, par)), x, h)
        fd = max(fd, abs(num - float(pdf(x, par))) / float(pdf(x, par)))

    x = np.linspace(0.01, 6, 400)
    special = 0.0
    for par, F, f in [
        (weibull(1.7), lambda x: -np.expm1(-x**1.7), lambda x: 1.7 * x**0.7 * np.exp(-x**1.7)),
        (generalized_exponential(3.0), lambda x: (-np.expm1(-x))**3,
         lambda x: 3 * np.exp(-x) * (-np.expm1(-x))**2),
        (burr_x(0.6), lambda x: (-np.expm1(-x**2))**0.6,
         lambda x: 1.2 * x * np.exp(-x**2) * (-np.expm1(-x**2))**-0.4),
        (rayleigh(), lambda x: -np.expm1(-x**2), lambda x: 2 * x * np.exp(-x**2)),
    ]:
        special = max(special, np.max(np.abs(cdf(x, par) - F(x))),
                      np.max(np.abs(pdf(x, par) - f(x)) / f(x)))
    ok = inv < 1e-10 and fd < 1e-5 and special < 1e-12
    verdict(1, ok, f"max|F(Q(p))-p|={inv:.2e} (<1e-10), pdf vs FD rel={fd:.2e} (<1e-5), "
                   f"special cases={special:.2e} (<1e-12)")


# -- 2 -----------------------------------------------------------------------

def _mc_means(c, theta, alpha, n, rng, chunk=1_000_000):
    s = np.zeros(3)
    s2 = np.zeros(3)
    for start in range(0, n, chunk):
        y = truncated_draws(c, theta, alpha, min(chunk, n - start), rng)
        u = y**theta
        cols = (np.log(y), u, np.log(-np.expm1(-u)))
        for i, v in enumerate(cols):
            s[i] += v.sum()
            s2[i] += (v * v).sum()
    mean = s / n
    se = np.sqrt((s2 / n - mean**2) / n)
    return mean, se


def test_criterion_2_conditional_expectations():
    rng = np.random.default_rng(2)
    worst = 0.0
    for c in (0.3, 1.5, 5.0):
        for theta in (0.5, 1.0, 1.5):
            for alpha in (0.5, 2.0, 11.1):
                par = GwParams(theta, alpha)
                mean, se = _mc_means(c, theta, alpha, 10_000_000, rng)
                got = np.array([conditional_A(c, par), conditional_B(c, par),
                                conditional_C(c, par)])
                worst = max(worst, float(np.max(np.abs(got - mean) / se)))
    b = abs(conditional_B(2.0, GwParams(1, 1)) - 3.0)
    cc = max(abs(conditional_C(1e-60, GwParams(0.7, a)) + 1 / a) for a in (0.5, 2.0, 11.1))
    ok = worst < 3 and b < 1e-8 and cc < 1e-8
    verdict(2, ok, f"27-point grid max |quad-MC|/SE={worst:.2f} (<3), |B(2;1,1)-3|={b:.1e}, "
                   f"|C(0+)+1/alpha|={cc:.1e} (<1e-8)")


# -- 3 -----------------------------------------------------------------------

def test_criterion_3_em():
    rng = np.random.default_rng(3)
    drop, score, gap = 0.0, 0.0, 0.0
    for i in range(10):
        par = PAPER_PARAMS if i % 2 else GwParams(1.3, 0.8)
        x = np.sort(sample(par, 120, rng))
        scheme = CensoringScheme.hybrid(120, 80, float(np.quantile(x, 0.7)))
        s = censor(x, scheme)
        fit = em_fit(s)
        ll = [l for _, l in fit.trace]
        drop = max(drop, -float(np.min(np.diff(ll))))
        k = s.n_censored
        g = fd_gradient(lambda v: censored_loglik(v, s.observed, k, s.c),
                        [fit.params.theta, fit.params.alpha])
        score = max(score, float(np.linalg.norm(g)))
        full = censor(x, CensoringScheme.complete(120))
        ref = direct_mle(x, 0, 1.0)
        got = em_fit(full, FitConfig(em_tol=1e-10)).params
        gap = max(gap, abs(got.theta - ref[0]), abs(got.alpha - ref[1]))
    big = np.sort(sample(PAPER_PARAMS, 10_000, rng))
    th = em_fit(censor(big, CensoringScheme.complete(10_000))).params.theta
    ok = drop <= 1e-6 and score < 1e-4 and gap < 1e-4 and abs(th - 0.51) <= 0.02
    verdict(3, ok, f"max loglik drop={drop:.1e} (<=1e-6), max score norm={score:.1e} (<1e-4), "
                   f"complete-data gap to direct MLE={gap:.1e} (<1e-4), "
                   f"n=1e4 theta_hat={th:.4f} (0.51+-0.02)")


# -- 4 -----------------------------------------------------------------------

def test_criterion_4_example_fits(bladder):
    n = len(bladder)
    x = np.sort(bladder)
    full = em_fit(censor(x, CensoringScheme.complete(n))).params
    d = ks_statistic(bladder, full)
    hyb = em_fit(censor(x, CensoringScheme.hybrid(n, 75, 7.6))).params
    t2 = em_fit(censor(x, CensoringScheme.type_ii(n, 75))).params

    def near(par, target):
        return abs(par.theta - target[0]) <= 0.02 and abs(par.alpha - target[1]) <= 0.02

    parts = [("complete", near(full, (0.470, 6.941)) and abs(d - 0.043) <= 0.005,
              f"({full.theta:.4f}, {full.alpha:.4f}) D={d:.4f} vs (0.470, 6.941) D=0.043"),
             ("hybrid", near(hyb, (0.632, 8.946)),
              f"({hyb.theta:.4f}, {hyb.alpha:.4f}) vs (0.632, 8.946)"),
             ("type-II", near(t2, (0.630, 8.909)),
              f"({t2.theta:.4f}, {t2.alpha:.4f}) vs (0.630, 8.909)")]
    verdict(4, all(ok for _, ok, _ in parts),
            "; ".join(f"{name} {'ok' if ok else 'off'} {text}" for name, ok, text in parts))


# -- 5 -----------------------------------------------------------------------

def test_criterion_5_example_charts():
    report = cli.run_example(B=5000, seed=1)
    targets = {"BHC": ((3.742, 6.524, 10.564), 0.05), "SHC": ((8.802, 10.333, 11.864), 0.03),
               "BT1C": ((5.819, 8.232, 10.708), 0.05), "BT2C": ((3.751, 6.555, 11.361), 0.05)}
    parts = []
    for label, (want, tol) in targets.items():
        got = (report[label]["lcl"], report[label]["cl"], report[label]["ucl"])
        ok = all(abs(g - w) <= tol * abs(w) for g, w in zip(got, want))
        parts.append((ok, f"{label} ({', '.join(f'{g:.3f}' for g in got)}) vs {want}"))
    verdict(5, all(ok for ok, _ in parts), "; ".join(text for _, text in parts))


# -- 6 -----------------------------------------------------------------------

def test_criterion_6_information():
    rng = np.random.default_rng(6)
    worst = 0.0
    for n, par in [(100, PAPER_PARAMS), (200, GwParams(1.4, 0.7)),
                   (150, GwParams(0.8, 3.0))]:
        for _ in range(3):
            x = np.sort(sample(par, n, rng))
            s = censor(x, CensoringScheme.hybrid(n, int(0.8 * n), float(np.quantile(x, 0.75))))
            fit = em_fit(s, FitConfig(em_tol=1e-10))
            v = np.array([fit.params.theta, fit.params.alpha])
            h = -fd_hessian(lambda w: censored_loglik(w, s.observed, s.n_censored, s.c), v,
                            h=1e-3 * v.min())
            got = observed_info(s, fit.params).entries
            worst = max(worst, float(np.max(np.abs(got - h) / np.abs(h))))
    grad = 0.0
    for p, th, al in [(0.1, 0.51, 11.1), (0.5, 2.0, 0.5), (0.9, 0.8, 3.0), (0.99, 1.5, 1.2)]:
        par = GwParams(th, al)
        num = fd_gradient(lambda w: float(quantile(p, GwParams(*w))), [th, al], h=1e-6)
        grad = max(grad, float(np.max(np.abs(quantile_gradient(p, par) - num) / np.abs(num))))
    x = np.sort(sample(PAPER_PARAMS, 200, rng))
    fit = em_fit(censor(x, CensoringScheme.hybrid(200, 150, 60)))
    ratio = quantile_se(fit, 0.5, 25) / quantile_se(fit, 0.5, 100)
    ok = worst < 0.02 and grad < 1e-6 and abs(ratio - 2) < 1e-9
    verdict(6, ok, f"observed info vs FD Hessian max rel={worst:.2e} (<2%), quantile gradient "
                   f"rel={grad:.1e} (<1e-6), se(m=25)/se(m=100)={ratio:.12f} (2)")


# -- 7 -----------------------------------------------------------------------

def test_criterion_7_in_control_arl():
    lines, ok = [], True
    for p in (0.1, 0.5, 0.9):
        for nu in (0.005, 0.0027, 0.002):
            s = estimate_arl(preset_design(1, p, nu, seed=0))
            z = (s.arl - 1 / nu) / s.se
            good = abs(z) <= 3 and 0.85 < s.sdrl / s.arl < 1.15
            ok &= good
            lines.append(f"p={p} nu={nu} ARL0={s.arl:.1f} z={z:+.2f} SDRL/ARL="
                         f"{s.sdrl / s.arl:.3f}{'' if good else ' *'}")
    verdict(7, ok, "; ".join(lines))


# -- 8 -----------------------------------------------------------------------

def test_criterion_8_shift_sensitivity():
    base = preset_design(1, 0.5, 0.005, seed=0)
    chart = study_chart(base)
    arl0 = estimate_arl(base, chart=chart).arl
    arl1 = {sh: estimate_arl(preset_design(1, 0.5, 0.005, rel_shift=sh, seed=0),
                             chart=chart).arl for sh in SHIFT_GRID}
    drop = 1 - arl1[(-0.04, 0.0)] / arl0
    ok = all(v < arl0 for v in arl1.values()) and drop >= 0.5
    shifts = ", ".join(f"{sh}:{v:.1f}" for sh, v in arl1.items())
    verdict(8, ok, f"ARL0={arl0:.1f}; ARL1 {shifts}; -4% theta reduction={drop:.1%} (>=50%)")


# -- 9 -----------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    rng = np.random.default_rng(9)
    scheme = CensoringScheme.hybrid(25, 15, 55)
    phase1 = [censor(np.sort(sample(PAPER_PARAMS, 25, rng)), scheme) for _ in range(5)]
    cfg = ChartConfig(0.9, 0.0027, scheme, k=5, B=800, seed=4)
    charts = [build_bhc(phase1, cfg, workers=w).to_json() for w in (1, 2, 1)]
    design = preset_design(1, 0.5, 0.005, rel_shift=(-0.04, 0), replications=60, n_charts=4,
                           B=300, seed=9)
    reports = []
    for w in (1, 2, 1):
        path = tmp_path / f"r{w}_{len(reports)}.csv"
        with open(path, "w") as fh:
            write_report(fh, [estimate_arl(design, workers=w)])
        reports.append(path.read_bytes())
    ok = len(set(charts)) == 1 and len(set(reports)) == 1
    verdict(9, ok, f"chart JSON identical over reruns/workers: {len(set(charts)) == 1}; "
                   f"ARL report identical: {len(set(reports)) == 1}")
