import io
import json
import math

import numpy as np
import pytest
from scipy import stats

from gwchart.censoring import CensoringScheme
from gwchart.charts import ChartConfig, ChartKind, ControlChart, bootstrap_statistics
from gwchart.distribution import GwParams
from gwchart.exceptions import DomainError
from gwchart.simulation import (PAPER_PARAMS, SHIFT_GRID, REPORT_COLUMNS, SimDesign, estimate_arl,
                                preset_design, run_length, scheme_catalog, study_chart,
                                substream, table1_report, write_report)

SCHEME = CensoringScheme.hybrid(25, 15, 55)


def fixed_chart(lcl, ucl, p=0.5, nu=0.05):
    cfg = ChartConfig(p, nu, SCHEME, k=20, B=1)
    return ControlChart(ChartKind.BHC, lcl, (lcl + ucl) / 2 if math.isfinite(ucl) else lcl, ucl,
                        PAPER_PARAMS, cfg)


def test_catalog():
    cat = scheme_catalog()
    assert len(cat) == 8
    assert (cat[0].n, cat[0].r, cat[0].x0) == (25, 15, 55)
    assert (cat[7].n, cat[7].r, cat[7].x0) == (40, 35, 70)
    assert [(s.n, s.r, s.x0) for s in cat[4:]] == [(25, 15, 70), (25, 20, 70), (40, 30, 70),
                                                    (40, 35, 70)]


def test_shift_grid():
    assert len(SHIFT_GRID) == 8
    assert (-0.04, 0.0) in SHIFT_GRID and (0.0, 0.08) in SHIFT_GRID


def test_substreams_are_keyed():
    a = substream(3, 2, 7).random(4)
    assert np.array_equal(a, substream(3, 2, 7).random(4))
    assert not np.array_equal(a, substream(3, 2, 8).random(4))


def test_immediate_signal():
    chart = fixed_chart(0.0, 0.0)
    rl, capped, _ = run_length(chart, PAPER_PARAMS, SCHEME, np.random.default_rng(0), cap=100)
    assert (rl, capped) == (1, False)


def test_cap_is_reported():
    chart = fixed_chart(0.0, math.inf)
    rl, capped, _ = run_length(chart, PAPER_PARAMS, SCHEME, np.random.default_rng(0), cap=50)
    assert (rl, capped) == (50, True)


def test_unassessable_policy():
    sch = CensoringScheme.hybrid(25, 15, 0.5)  # almost never two failures below 0.5
    chart = fixed_chart(0.0, math.inf)
    rl, capped, bad = run_length(chart, PAPER_PARAMS, sch, np.random.default_rng(0), cap=30)
    assert capped and bad == 30
    rl, capped, bad = run_length(chart, PAPER_PARAMS, sch, np.random.default_rng(0), cap=30,
                                 unassessable="signal")
    assert rl == 1 and not capped


def test_in_control_run_lengths_are_geometric():
    xi, _ = bootstrap_statistics(PAPER_PARAMS, SCHEME, 0.5, 20000, np.random.default_rng(1))
    lcl, ucl = np.quantile(xi, [0.025, 0.975])
    far = np.mean((xi < lcl) | (xi > ucl))
    chart = fixed_chart(lcl, ucl)
    rls = np.array([run_length(chart, PAPER_PARAMS, SCHEME, substream(4, i), cap=2000)[0]
                    for i in range(600)])
    assert abs(rls.mean() - 1 / far) < 4 * rls.std() / math.sqrt(len(rls))
    assert 0.85 < rls.std() / rls.mean() < 1.15
    # chi-square against Geometric(far) on bins of equal probability
    edges = np.unique(np.ceil(stats.geom.ppf(np.linspace(0, 1, 9)[1:-1], far)))
    bins = np.concatenate([[0], edges, [np.inf]])
    observed = np.histogram(rls, bins)[0]
    expected = len(rls) * np.diff(stats.geom.cdf(bins, far))
    assert stats.chisquare(observed, expected).pvalue > 0.01


def small(**kw):
    base = dict(replications=40, n_charts=3, B=200, seed=11)
    base.update(kw)
    return base


def test_estimate_arl_deterministic_across_workers():
    d = preset_design(1, 0.5, 0.005, rel_shift=(-0.08, 0), **small())
    a = estimate_arl(d)
    b = estimate_arl(d, workers=2)
    assert np.array_equal(a.run_lengths, b.run_lengths)
    assert (a.arl, a.sdrl, a.lcl, a.ucl) == (b.arl, b.sdrl, b.lcl, b.ucl)
    assert a.arl >= 1 and a.censored_runs == 0


def test_modes_run():
    for mode in ("fixed", "regenerate"):
        s = estimate_arl(preset_design(1, 0.5, 0.005, rel_shift=(0, 0.08), mode=mode,
                                       **small(replications=6)))
        assert s.replications == 6 and s.arl >= 1
    med = estimate_arl(preset_design(1, 0.5, 0.005, aggregate="median", **small(replications=3)))
    assert med.lcl < med.ucl


def test_design_validation():
    cfg = ChartConfig(0.5, 0.005, SCHEME, k=20, B=10)
    assert SimDesign(PAPER_PARAMS, cfg).run_length_cap == 20000
    with pytest.raises(DomainError):
        SimDesign(PAPER_PARAMS, cfg, run_length_cap=100)
    with pytest.raises(DomainError):
        SimDesign(PAPER_PARAMS, cfg, shift=(-0.6, 0))
    with pytest.raises(DomainError):
        SimDesign(PAPER_PARAMS, cfg, mode="other")
    with pytest.raises(DomainError):
        preset_design(9)


def test_design_round_trip():
    d = preset_design(3, 0.9, 0.0027, rel_shift=(0.04, 0), **small())
    again = SimDesign.from_dict(json.loads(json.dumps(d.to_dict())))
    assert again == d


def test_limits_narrow_with_m_and_rise_with_p():
    width = {}
    for sid in (1, 3):
        c = study_chart(preset_design(sid, 0.5, 0.005, **small(n_charts=4, B=400)))
        width[sid] = c.ucl - c.lcl
    assert width[3] < width[1]
    lo = [study_chart(preset_design(1, p, 0.005, **small(n_charts=2))) for p in (0.1, 0.5, 0.9)]
    assert lo[0].lcl < lo[1].lcl < lo[2].lcl
    assert lo[0].ucl < lo[1].ucl < lo[2].ucl


def test_table1_report_columns():
    designs = [preset_design(1, 0.5, 0.005, **small(replications=5))]
    rows, summaries = table1_report(designs)
    assert list(rows[0]) == REPORT_COLUMNS
    buf = io.StringIO()
    write_report(buf, summaries)
    head, line = buf.getvalue().splitlines()
    assert head.split(",")[:8] == ["scheme_id", "m", "r", "x0", "p", "nu", "delta_theta",
                                   "delta_alpha"]
    assert line.startswith("1,25,15,55,0.5,0.005,0,0")
    with pytest.raises(DomainError):
        table1_report([preset_design(1, 0.5, 0.005, rel_shift=(0.04, 0), **small())])
