import math

import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from morinkit.errors import IdenticallyZero, NotARoot
from morinkit.realroots import Polynomial, is_simple_root, real_roots, root_bound, sturm_count


def P(*coeffs):
    return Polynomial(coeffs)


T2M1 = P(-1, 0, 1)
T3M3T = P(0, -3, 0, 1)


@pytest.mark.parametrize("p, a, b, expected", [
    (T2M1, 0, 2, 1),
    (T3M3T, -2, 2, 3),
    (P(1, 0, 1), -10, 10, 0),
])
def test_sturm_count_examples(p, a, b, expected):
    assert sturm_count(p, a, b) == expected


def test_sturm_count_half_open():
    # roots at +-1: (a, b] includes b but not a
    assert sturm_count(T2M1, -1, 1) == 1
    assert sturm_count(T2M1, -1.5, 1) == 2
    assert sturm_count(T2M1, 1, 2) == 0


def test_sturm_count_counts_distinct_roots():
    # (t+1)^2 (t-2)
    assert sturm_count(P(-2, -3, 0, 1), -5, 5) == 2


def test_sturm_count_rejects_bad_input():
    with pytest.raises(ValueError):
        sturm_count(T2M1, 2, 2)
    with pytest.raises(IdenticallyZero):
        sturm_count(P(0), 0, 1)


def test_real_roots_examples():
    rs = real_roots(T2M1)
    assert rs.roots == (-1.0, 1.0) and all(rs.simple_flags)
    rs = real_roots(T3M3T)
    assert rs.roots == pytest.approx((-math.sqrt(3), 0.0, math.sqrt(3)), abs=1e-14)
    assert all(rs.simple_flags)
    rs = real_roots(P(0, 0, 1))
    assert rs.roots == (0.0,) and rs.simple_flags == (False,)


def test_real_roots_double_root_flagged():
    rs = real_roots(P(-2, -3, 0, 1))
    assert rs.roots == pytest.approx((-1.0, 2.0), abs=1e-12)
    assert rs.simple_flags == (False, True)
    assert rs.certified_distinct


def test_real_roots_empty_cases():
    assert len(real_roots(P(1, 0, 1))) == 0
    assert len(real_roots(P(3.5))) == 0
    with pytest.raises(IdenticallyZero):
        real_roots(P(0, 0))


@pytest.mark.parametrize("p, x, expected", [
    (T2M1, 1.0, True),
    (P(0, 0, 1), 0.0, False),
    (T3M3T, math.sqrt(3), True),
])
def test_is_simple_root_examples(p, x, expected):
    assert is_simple_root(p, x) is expected


def test_is_simple_root_rejects_non_root():
    with pytest.raises(NotARoot):
        is_simple_root(T2M1, 0.5)


def test_simple_root_test_is_scale_free():
    # roots +-1e-3 of t^2 - 1e-6: p' is tiny in absolute terms but the root is simple
    p = P(-1e-6, 0, 1)
    rs = real_roots(p)
    assert len(rs) == 2 and all(rs.simple_flags)


int_coeffs = st.lists(st.integers(-20, 20), min_size=2, max_size=8).filter(lambda c: c[-1] != 0)


def _sympy_distinct_real(coeffs):
    t = sp.Symbol("t")
    poly = sp.Poly(list(reversed(coeffs)), t)
    return sorted(float((a + b) / 2) for (a, b), _ in poly.intervals())


@settings(max_examples=150, deadline=None)
@given(int_coeffs)
def test_root_count_matches_exact_isolation(coeffs):
    p = Polynomial(coeffs)
    rs = real_roots(p)
    expected = _sympy_distinct_real(coeffs)
    assert len(rs) == len(expected)
    B = root_bound(p)
    assert sturm_count(p, -B, B) == len(rs)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-30, 30), min_size=1, max_size=6, unique=True))
def test_integer_roots_recovered(roots):
    t = sp.Symbol("t")
    coeffs = [int(c) for c in reversed(sp.Poly(sp.prod([t - r for r in roots]), t).all_coeffs())]
    rs = real_roots(Polynomial(coeffs))
    assert rs.roots == pytest.approx(sorted(roots), abs=1e-9)
    assert all(rs.simple_flags)


@settings(max_examples=100, deadline=None)
@given(int_coeffs, st.integers(-6, 6))
def test_roots_scale_with_power_of_two(coeffs, e):
    # q(x) = p(2^e x) has roots r / 2^e, and the scaling is exact in binary
    c = 2.0**e
    p = Polynomial(coeffs)
    q = Polynomial([a * c**i for i, a in enumerate(coeffs)])
    rp, rq = real_roots(p), real_roots(q)
    assert len(rp) == len(rq)
    for a, b in zip(rp.roots, rq.roots):
        assert b * c == pytest.approx(a, rel=1e-9, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(int_coeffs)
def test_simple_roots_are_sign_changes(coeffs):
    p = Polynomial(coeffs)
    rs = real_roots(p)
    for x, simple in zip(rs.roots, rs.simple_flags):
        if simple:
            d = 1e-6 * max(1.0, abs(x))
            assert sturm_count(p, x - d, x + d) == 1
