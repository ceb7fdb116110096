import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from morinkit import whitney as W
from morinkit.errors import DimensionMismatch
from morinkit.realroots import real_roots, sturm_count


def pt(*v):
    return W.PointK.from_vector(v)


def test_eval_examples():
    assert W.eval(W.WhitneyMap(2), pt(1, -3)).as_tuple() == (-2.0, -3.0)
    assert W.eval(W.WhitneyMap(3), pt(2, 1, 1)).as_tuple() == (22.0, 1.0, 1.0)
    for k in range(1, 6):
        assert W.eval(W.WhitneyMap(k), pt(*[0.0] * k)).as_tuple() == (0.0,) * k


def test_dwk_dt_examples():
    assert W.dWk_dt(W.WhitneyMap(1), pt(0)) == 0.0
    assert W.dWk_dt(W.WhitneyMap(2), pt(1, -3)) == 0.0
    assert W.dWk_dt(W.WhitneyMap(2), pt(0, -3)) == -3.0


def test_dimension_checked():
    with pytest.raises(DimensionMismatch):
        W.eval(W.WhitneyMap(3), pt(1, 2))
    with pytest.raises(ValueError):
        W.WhitneyMap(0)


def test_solve_examples():
    assert W.solve(W.WhitneyMap(1), pt(-0.25)).count == 0
    res = W.solve(W.WhitneyMap(2), pt(0, -3))
    assert [p.t for p in res.solutions] == pytest.approx([-math.sqrt(3), 0, math.sqrt(3)], abs=1e-14)
    assert all(res.regular)
    # t^3 - 3t - 2 = (t + 1)^2 (t - 2)
    res = W.solve(W.WhitneyMap(2), pt(2, -3))
    assert [p.t for p in res.solutions] == pytest.approx([-1.0, 2.0], abs=1e-12)
    assert res.regular == (False, True)


def test_regular_point_matches_derivative():
    w = W.WhitneyMap(2)
    assert not W.is_regular_point(w, pt(1, -3))
    assert W.is_regular_point(w, pt(0, -3))


def test_construct_examples():
    pc = W.construct_full_spread(1, 0.04)
    assert -0.04 < pc.alphas[0] < 0
    assert [abs(r) for r in pc.roots] == pytest.approx([math.sqrt(-pc.alphas[0])] * 2)
    assert all(0 < abs(r) < 0.2 for r in pc.roots)
    pc = W.construct_full_spread(2, 0.01)
    assert all(0 < abs(a) < 0.01 for a in pc.alphas)
    assert len(pc.roots) == 3 and all(0 < abs(r) < 0.2 for r in pc.roots)


@pytest.mark.parametrize("k", range(1, 7))
def test_construct_sturm_window(k):
    eps = 1e-3
    pc = W.construct_full_spread(k, eps)
    b = k * math.sqrt(eps)
    assert sturm_count(pc.polynomial(), -b, b) == k + 1


def test_rho_examples():
    assert W.rho_rough(1, 0.01) == pytest.approx(0.1)
    vals = [W.rho_bound(3, e) for e in (1e-1, 1e-2, 1e-3, 1e-4, 1e-6)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    # g(t) ~ t^{k+1} near 0, so the bound tends to 0 like eps^{1/(k+1)}
    assert W.rho_bound(3, 1e-12) == pytest.approx(1e-3, rel=1e-2)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.floats(1e-4, 0.5), st.integers(0, 2**31 - 1))
def test_rho_bounds_every_root(k, eps, seed):
    rng = np.random.default_rng(seed)
    alphas = rng.uniform(-eps, eps, k)
    roots = real_roots(W.full_spread_polynomial(alphas)).roots
    assert all(abs(x) < W.rho_bound(k, eps) for x in roots)


def test_witness_examples():
    s, res = W.witness_max_multiplicity(1, 0.1, 0.1)
    assert s.t > 0 and [p.t for p in res.solutions] == pytest.approx([-math.sqrt(s.t), math.sqrt(s.t)])
    s, res = W.witness_max_multiplicity(2, 1e-2, 1e-2)
    assert np.linalg.norm(s.as_tuple()) < 1e-2 and res.count == 3 and all(res.regular)
    s, res = W.witness_max_multiplicity(4, 1e-1, 1e-1)
    assert res.count == 5 and all(res.regular) and res.certified_distinct


def test_region_examples():
    assert W.classify_region(W.WhitneyMap(1), pt(-1 / 9)).count == 0
    v = W.classify_region(W.WhitneyMap(2), pt(1 / 27, 0))
    assert v.count == 1 and v.regular_count == 1
    grid = W.region_grid(W.WhitneyMap(1), [(-1, 1)], 5)
    assert [v.count for v in grid] == [0, 0, 1, 2, 2]
    grid = W.region_grid(W.WhitneyMap(2), [(-1, 1), (-1, 1)], 3)
    assert len(grid) == 9 and all(1 <= v.count <= 3 for v in grid)


def test_region_grid_is_row_major_and_threaded_identical():
    w = W.WhitneyMap(2)
    a = W.region_grid(w, [(-1, 1), (-2, 2)], 4)
    b = W.region_grid(w, [(-1, 1), (-2, 2)], 4, threads=3)
    assert a == b
    assert [v.s.as_tuple() for v in a[:2]] == [(-1.0, -2.0), (-1.0, -2.0 + 4 / 3)]


def test_region_csv_roundtrip():
    grid = W.region_grid(W.WhitneyMap(1), [(-1, 1)], 3)
    text = W.region_csv(grid, 1)
    lines = text.splitlines()
    assert lines[0] == "s_0,count,regular_count"
    assert lines[1:] == ["-1.0,0,0", "0.0,1,0", "1.0,2,2"]


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 6), st.lists(st.floats(-2, 2), min_size=6, max_size=6))
def test_solutions_map_to_target(k, vals):
    w = W.WhitneyMap(k)
    s = W.PointK.from_vector(vals[:k])
    res = W.solve(w, s)
    assert res.count <= k + 1
    for p in res.solutions:
        image = W.eval(w, p)
        assert image.params == s.params
        assert image.t == pytest.approx(s.t, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3).map(lambda j: 2 * j), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_even_k_always_has_a_solution(k, vals):
    res = W.solve(W.WhitneyMap(k), W.PointK.from_vector(vals[:k]))
    assert res.count >= 1


@settings(max_examples=60, deadline=None)
@given(st.floats(-4, 4))
def test_k1_counts_follow_sign(s):
    count = W.solve(W.WhitneyMap(1), pt(s)).count
    assert (count == 0) == (s < 0)
