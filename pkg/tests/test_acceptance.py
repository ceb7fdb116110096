"""End-to-end acceptance checks, one test (or parametrized family) per criterion.

Each check reports a PASS/FAIL line; the terminal summary folds them into one
line per criterion.
"""

import json
import math
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

from morinkit import lienard as L
from morinkit import whitney as W
from morinkit.classify import classify_point, invariance_check, sigma_map, t_map, transversality_test
from morinkit.opcore import oracle_from_key
from morinkit.realroots import real_roots, sturm_count

THOM = {1: "Fold", 2: "Cusp", 3: "SwallowsTail", 4: "Butterfly"}


# 1. classification of w_k at the origin


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_whitney_origin_labels(criterion, k):
    F = oracle_from_key(f"wk:{k}")
    t0 = time.perf_counter()
    label = classify_point(F, np.zeros(k))[0].label
    dt = time.perf_counter() - t0
    ok = criterion(1, label == THOM[k] and dt < 1.0, f"w_{k} -> {label} in {dt:.3f}s")
    assert ok


# 2. multiplicity bound and maximal-multiplicity witnesses


@pytest.mark.parametrize("k", range(1, 7))
def test_solution_count_bound(criterion, k):
    rng = np.random.default_rng([2, k])
    w = W.WhitneyMap(k)
    worst = 0
    for i in range(10_000):
        s = rng.uniform(-1, 1, k)
        if i % 2:
            # half the targets near the origin, where solutions pile up
            s = s * 10.0 ** rng.uniform(-6, 0)
        worst = max(worst, W.solve(w, W.PointK.from_vector(s)).count)
    ok = criterion(2, worst <= k + 1, f"k={k}: max count {worst} over 10^4 targets (bound {k + 1})")
    assert ok


@pytest.mark.parametrize("k", range(1, 7))
@pytest.mark.parametrize("delta", [1e-1, 1e-2, 1e-3])
def test_witness_attains_bound(criterion, k, delta):
    s_hat, res = W.witness_max_multiplicity(k, delta, delta)
    close = all(abs(p.t) < delta for p in res.solutions) and np.linalg.norm(s_hat.as_tuple()) < delta
    ok = res.count == k + 1 and all(res.regular) and res.certified_distinct and close
    ok = criterion(2, ok, f"k={k} delta={delta:g}: {res.count} regular distinct solutions")
    assert ok


# 3. full-spread constructor


@pytest.mark.parametrize("k", range(1, 6))
@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_full_spread_constructor(criterion, k, eps):
    pc = W.construct_full_spread(k, eps)
    p = pc.polynomial()
    b = k * math.sqrt(eps)
    rs = real_roots(p)
    ok = (all(0 < abs(a) < eps for a in pc.alphas)
          and sturm_count(p, -b, b) == k + 1
          and len(rs) == k + 1 and rs.certified_distinct and all(rs.simple_flags)
          and all(0 < abs(x) < b for x in rs.roots))
    ok = criterion(3, ok, f"k={k} eps={eps:g}: {len(rs)} certified roots in (-{b:.3g}, {b:.3g})")
    assert ok


# 4. root-size bound


@pytest.mark.parametrize("k", range(1, 6))
@pytest.mark.parametrize("eps", [1e-1, 1e-2, 1e-3])
def test_rho_bound(criterion, k, eps):
    rng = np.random.default_rng([4, k, int(-math.log10(eps))])
    rho = W.rho_bound(k, eps)
    biggest = 0.0
    for _ in range(50):
        roots = real_roots(W.full_spread_polynomial(rng.uniform(-eps, eps, k))).roots
        biggest = max([biggest] + [abs(x) for x in roots])
    rough = max((k * eps) ** 0.5, (k * eps) ** (1 / (k + 1)))
    ok = criterion(4, biggest <= rho and rho <= rough,
                   f"k={k} eps={eps:g}: max|root| {biggest:.4g} <= rho {rho:.5g} <= rough {rough:.5g}")
    assert ok


# 5. regions with no solution and with exactly one


@pytest.mark.parametrize("k", [1, 3])
@pytest.mark.parametrize("gamma", [1e-1, 1e-2, 1e-3])
def test_empty_region(criterion, k, gamma):
    s = W.PointK.from_vector([-gamma] + [0.0] * (k - 1))
    count = W.solve(W.WhitneyMap(k), s).count
    ok = criterion(5, count == 0, f"k={k} gamma={gamma:g}: count {count}")
    assert ok


@pytest.mark.parametrize("k", [2, 4])
@pytest.mark.parametrize("gamma", [1e-1, 1e-2, 1e-3])
def test_single_solution_region(criterion, k, gamma):
    s = W.PointK.from_vector([gamma ** (k + 1)] + [0.0] * (k - 1))
    res = W.solve(W.WhitneyMap(k), s)
    ok = res.count == 1 and res.regular == (True,) and res.solutions[0].t == pytest.approx(gamma, rel=1e-9)
    ok = criterion(5, ok, f"k={k} gamma={gamma:g}: count {res.count}")
    assert ok


# 6. chain identities


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_t_equals_sigma_on_equal_chains(criterion, k):
    rng = np.random.default_rng([6, k])
    worst = 0.0
    for _ in range(100):
        key = rng.choice(["wk:2", "wk:3", "wk:4", "fn:2:5"])
        F = oracle_from_key(str(key))
        u = rng.uniform(-1, 1, F.dim)
        chain = list(rng.normal(size=(k, F.dim)))
        s = sigma_map(F, u, chain, k)
        t = t_map(F, u, chain, chain, k)
        worst = max(worst, float(np.linalg.norm(t - s)) / max(1e-300, float(np.linalg.norm(s))))
    ok = criterion(6, worst <= 1e-8, f"k={k}: max relative gap {worst:.2e} on 100 chains")
    assert ok


@pytest.mark.parametrize("k", [2, 3, 4])
def test_fibering_identities(criterion, k):
    _, _, diag = classify_point(oracle_from_key(f"wk:{k}"), np.zeros(k))
    worst = max(diag.identity_residuals)
    ok = criterion(6, worst <= 1e-5 and diag.reachable == k - 1,
                   f"w_{k}: identity residuals up to h={diag.reachable}, max {worst:.2e}")
    assert ok


# 7. invariance under change of chain representatives


def _fixture_oracle(name):
    if name == "lienard":
        op = L.discretize(L.family3(1, 1, 1), 64)
        return op.oracle, L.discrete_tolerances(op)
    return oracle_from_key(name), None


@pytest.mark.parametrize("name", ["wk:1", "wk:2", "wk:3", "wk:4", "fn:2:5", "lienard"])
def test_invariance(criterion, name):
    F, tol = _fixture_oracle(name)
    kwargs = {} if tol is None else {"tol": tol}
    rep = invariance_check(F, np.zeros(F.dim), trials=200, seed=7, **kwargs)
    ok = criterion(7, rep.passed and rep.max_scaling_error <= 1e-8,
                   f"{name}: labels {rep.label_agreement}/200, stages {rep.stage_agreement}/200, "
                   f"scaling error {rep.max_scaling_error:.1e}")
    assert ok


# 8. the F_n family


@pytest.mark.parametrize("k, n", [(1, 4), (2, 5), (3, 6)])
def test_fn_maximal_transversality(criterion, k, n):
    label = classify_point(oracle_from_key(f"fn:{k}:{n}"), np.zeros(k + 1))[0].label
    ok = criterion(8, label == f"MaxTransverse({k})", f"F_{n} (k={k}) -> {label}")
    assert ok


@pytest.mark.parametrize("k", [1, 2, 3])
def test_fn_zero_solution_line(criterion, k):
    F = oracle_from_key(f"fn:{k}:0")
    _, chain, _ = classify_point(F, np.zeros(k + 1))
    transverse = transversality_test(F, np.zeros(k + 1), chain, k).transverse
    on_line = all(not F(np.r_[t, np.zeros(k)]).any() for t in np.linspace(-1, 1, 21))
    ok = criterion(8, bool(transverse) and on_line,
                   f"F_0 (k={k}): level-{k} transverse {transverse}, zero along t-axis {on_line}")
    assert ok


# 9. closed-form cosine integrals


def test_cosine_integrals(criterion):
    worst = 0.0
    for kind in ("pure", "with_sin", "odd"):
        for m in range(9):
            for mu in range(5):
                if kind == "with_sin" and mu == 0:
                    continue
                worst = max(worst, abs(L.cosine_integral(m, mu, kind) - L.cosine_integral_quadrature(m, mu, kind)))
    named = str(L.cosine_integral_exact(2)) == "3/8*pi" and str(L.cosine_integral_exact(3)) == "5/16*pi"
    ok = criterion(9, worst < 1e-12 and named, f"max |closed - quad| {worst:.1e}; 3/8 pi and 5/16 pi exact")
    assert ok


# 10. condition checker


def test_condition_checker(criterion):
    rep = L.check_conditions(L.family3(1, 1, 1))
    good = (rep.exact and rep.swallowtail and all(c[1] for c in rep.checks_I + rep.checks_II)
            and rep.step_values == {"s3": 0, "s4": 48, "s5": 114})
    edge = L.check_conditions(L.family3(1, Fraction(22, 3), 1))
    ok = criterion(10, good and edge.step_values["s5"] == 0,
                   f"family 3: {dict((k, str(v)) for k, v in rep.step_values.items())}; "
                   f"b=22/3: s5={edge.step_values['s5']}")
    assert ok


# 11. discrete classification of the swallow's tail


def test_discrete_swallowtail(criterion):
    t0 = time.perf_counter()
    res = L.classify_discrete(L.discretize(L.family3(1, 1, 1), 128))
    errs = []
    for N in (32, 64, 128):
        r = L.classify_discrete(L.discretize(L.family3(1, 1, 1), N))
        errs.append(max(abs(r.stage_values[h] - r.targets[h]) for h in r.targets))
    dt = time.perf_counter() - t0
    ok = (res.verdict.label == "SwallowsTail" and res.cos_similarity > 0.999
          and errs[0] > errs[1] > errs[2] and dt < 60)
    ok = criterion(11, ok, f"N=128 -> {res.verdict.label}, cos similarity {res.cos_similarity:.6f}, "
                           f"stage errors {[f'{e:.2e}' for e in errs]}, {dt:.1f}s")
    assert ok


# 12. four solutions near the swallow's tail


def test_four_solutions(criterion):
    op = L.discretize(L.family3(1, 1, 1), 64)
    t0 = time.perf_counter()
    res = L.multiplicity_search(op)
    dt = time.perf_counter() - t0
    residual = max(s["residual"] for s in res.newton_stats)
    gap = min(res.distances) if res.distances else math.inf
    most = max(c for _, c in res.sweep)
    ok = (res.count == 4 and residual <= 1e-10 and gap >= 1e-3 and most < 5
          and max(abs(b) for b in res.beta) <= 1e-2 and dt < 600)
    ok = criterion(12, ok, f"{res.count} solutions (residual {residual:.1e}, gap {gap:.2e}), "
                           f"max over {len(res.sweep)} sampled h: {most}, {dt:.0f}s")
    assert ok


# 13. reproducible CLI output

CLI_RUNS = [
    ["whitney", "solve", "--k", "3", "--target", "0.001,-0.1,0"],
    ["whitney", "witness", "--k", "3", "--delta", "1e-2"],
    ["whitney", "construct", "--k", "4", "--eps", "1e-3"],
    ["whitney", "rho", "--k", "2", "--eps", "0.01"],
    ["whitney", "region", "--k", "2", "--box", "-1:1,-1:1", "--res", "6", "--threads", "2"],
    ["classify", "--map", "wk:3", "--invariance", "20", "--seed", "11"],
    ["classify", "--map", "fn:2:5"],
    ["lienard", "check"],
    ["lienard", "integrals", "--m", "4", "--mu", "2", "--kind", "with_sin"],
    ["lienard", "classify", "--n", "32"],
    ["lienard", "multiplicity", "--samples", "2", "--starts", "4", "--seed", "5"],
    ["lienard", "multiplicity", "--samples", "2", "--starts", "4", "--seed", "5", "--format", "csv"],
]


@pytest.mark.parametrize("argv", CLI_RUNS, ids=lambda a: " ".join(a[:2]))
def test_cli_byte_identical(criterion, argv):
    cmd = [sys.executable, "-m", "morinkit.cli", *argv]
    first = subprocess.run(cmd, capture_output=True, check=True).stdout
    second = subprocess.run(cmd, capture_output=True, check=True).stdout
    if argv[-1] != "csv" and argv[1] != "region":
        json.loads(first)
    ok = criterion(13, first == second and len(first) > 0, f"{' '.join(argv)}: {len(first)} bytes")
    assert ok
