import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gwchart.censoring import CensoringKind, CensoringScheme, HybridCensoredSample, censor
from gwchart.exceptions import DomainError

X = np.array([0.3, 0.9, 1.4, 2.2, 3.1, 4.8, 6.0, 7.5, 9.9, 12.0])


def test_case_one_quota_first():
    s = censor(X, CensoringScheme.hybrid(10, 4, 5.0))
    assert (s.d, s.c, s.case) == (4, 2.2, 1)
    assert s.n_censored == 6


def test_case_two_time_first():
    s = censor(X, CensoringScheme.hybrid(10, 8, 5.0))
    assert (s.d, s.c, s.case) == (6, 5.0, 2)
    np.testing.assert_array_equal(s.observed, X[:6])


def test_failure_exactly_at_x0_is_censored():
    s = censor(X, CensoringScheme.hybrid(10, 9, 4.8))
    assert s.d == 5 and s.c == 4.8


def test_type_i_and_type_ii_limits():
    t1 = censor(X, CensoringScheme.type_i(10, 5.0))
    assert (t1.d, t1.c) == (6, 5.0) and t1.scheme.kind is CensoringKind.TYPE_I
    t2 = censor(X, CensoringScheme.type_ii(10, 3))
    assert (t2.d, t2.c) == (3, 1.4)
    full = censor(X, CensoringScheme.complete(10))
    assert full.d == 10 and full.n_censored == 0


def test_zero_failures_is_degenerate_not_an_error():
    s = censor(X, CensoringScheme.hybrid(10, 5, 0.1))
    assert s.d == 0 and s.is_degenerate and s.c == 0.1


@pytest.mark.parametrize("args", [(10, 0, 1.0), (10, 11, 1.0), (10, 5, 0.0), (0, 1, 1.0)])
def test_scheme_validation(args):
    with pytest.raises(DomainError):
        CensoringScheme.hybrid(*args)


def test_type_scheme_invariants():
    with pytest.raises(DomainError):
        CensoringScheme(10, 5, 3.0, CensoringKind.TYPE_I)
    with pytest.raises(DomainError):
        CensoringScheme(10, 5, 3.0, CensoringKind.TYPE_II)


def test_censor_input_checks():
    sch = CensoringScheme.hybrid(10, 4, 5.0)
    with pytest.raises(DomainError):
        censor(X[::-1], sch)
    with pytest.raises(DomainError):
        censor(X[:9], sch)


def test_sample_validation():
    sch = CensoringScheme.hybrid(5, 3, 2.0)
    with pytest.raises(DomainError):
        HybridCensoredSample(np.array([0.5, 1.0]), 3, 1.0, sch)
    with pytest.raises(DomainError):
        HybridCensoredSample(np.array([0.5, 2.5]), 2, 2.0, sch)


def test_scheme_round_trip():
    for sch in (CensoringScheme.hybrid(25, 15, 55), CensoringScheme.type_ii(25, 15),
                CensoringScheme.type_i(25, 7.6)):
        assert CensoringScheme.from_dict(sch.to_dict()) == sch
    assert CensoringScheme.type_ii(5, 2).to_dict()["x0"] is None


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.01, 100.0), min_size=2, max_size=40, unique=True),
       st.integers(1, 40), st.floats(0.01, 120.0))
def test_censoring_invariants(values, r, x0):
    x = np.sort(np.array(values))
    n = len(x)
    r = min(r, n)
    s = censor(x, CensoringScheme.hybrid(n, r, x0))
    assert 0 <= s.d <= r and s.c <= x0
    assert s.c == min(x[r - 1], x0)
    if s.d:
        assert s.observed[-1] <= s.c
    # every censored unit lies at or beyond the threshold
    assert np.all(x[s.d:] >= s.c)
    assert s.case == (1 if x[r - 1] < x0 else 2) or s.d == r
