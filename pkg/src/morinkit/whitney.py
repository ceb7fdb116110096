"""The generalized Whitney maps w_k on R^k and the local multiplicity theory around them.

w_k(t, t_1, ..., t_{k-1}) = (t^{k+1} + t_{k-1} t^{k-1} + ... + t_1 t, t_1, ..., t_{k-1})
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BudgetExhausted, DimensionMismatch
from .realroots import (
    DEFAULT_TOL,
    SIMPLE_ROOT_THRESHOLD,
    Polynomial,
    RootSet,
    real_roots,
    sturm_count,
)


@dataclass(frozen=True)
class WhitneyMap:
    k: int

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError("order k must be an integer >= 1")


@dataclass(frozen=True)
class PointK:
    """A point (t, t_1, ..., t_{k-1}) of R^k, or a target (s, s_1, ..., s_{k-1})."""

    t: float
    params: tuple = ()

    def __init__(self, t: float, params: Sequence[float] = ()):
        object.__setattr__(self, "t", float(t))
        object.__setattr__(self, "params", tuple(float(x) for x in params))

    @classmethod
    def from_vector(cls, v: Sequence[float]) -> "PointK":
        v = list(v)
        if not v:
            raise DimensionMismatch("empty point")
        return cls(v[0], v[1:])

    def as_tuple(self) -> tuple:
        return (self.t,) + self.params

    @property
    def dim(self) -> int:
        return 1 + len(self.params)


@dataclass(frozen=True)
class SolveResult:
    solutions: tuple
    regular: tuple
    target: PointK
    certified_distinct: bool = True

    @property
    def count(self) -> int:
        return len(self.solutions)


@dataclass(frozen=True)
class PerturbationCoeffs:
    """Coefficients alpha_0..alpha_{k-1} of x^{k+1} + alpha_{k-1} x^{k-1} + ... + alpha_0."""

    alphas: tuple
    eps: float
    roots: tuple = ()

    @property
    def k(self) -> int:
        return len(self.alphas)

    def polynomial(self) -> Polynomial:
        return full_spread_polynomial(self.alphas)


@dataclass(frozen=True)
class RegionVerdict:
    s: PointK
    count: int
    regular_count: int


def _check(w: WhitneyMap, p: PointK) -> None:
    if len(p.params) != w.k - 1:
        raise DimensionMismatch(f"w_{w.k} expects {w.k - 1} parameters, got {len(p.params)}")


def eval(w: WhitneyMap, p: PointK) -> PointK:  # noqa: A001 - mirrors the math name
    _check(w, p)
    t = p.t
    val = t ** (w.k + 1)
    for j, tj in enumerate(p.params, start=1):
        val += tj * t**j
    return PointK(val, p.params)


def dWk_dt(w: WhitneyMap, p: PointK) -> float:
    _check(w, p)
    t = p.t
    val = (w.k + 1) * t**w.k
    for j, tj in enumerate(p.params, start=1):
        val += j * tj * t ** (j - 1)
    return val


def _dWk_dt_scale(w: WhitneyMap, p: PointK) -> float:
    t = p.t
    val = abs((w.k + 1) * t**w.k)
    for j, tj in enumerate(p.params, start=1):
        val += abs(j * tj * t ** (j - 1))
    return val


def is_regular_point(w: WhitneyMap, p: PointK, threshold: float = SIMPLE_ROOT_THRESHOLD) -> bool:
    """w_k is a local diffeomorphism at p iff dW_k/dt does not vanish there."""
    return abs(dWk_dt(w, p)) > threshold * _dWk_dt_scale(w, p)


def reduced_polynomial(w: WhitneyMap, s: PointK) -> Polynomial:
    """t^{k+1} + s_{k-1} t^{k-1} + ... + s_1 t - s, whose real roots parametrize w_k^{-1}(s)."""
    _check(w, s)
    coeffs = [0.0] * (w.k + 2)
    coeffs[0] = -s.t
    for j, sj in enumerate(s.params, start=1):
        coeffs[j] = sj
    coeffs[w.k + 1] = 1.0
    return Polynomial(coeffs)


def solve(w: WhitneyMap, s: PointK, tol: float = DEFAULT_TOL,
          simple_tol: float = SIMPLE_ROOT_THRESHOLD) -> SolveResult:
    rs = real_roots(reduced_polynomial(w, s), tol, simple_tol)
    sols = tuple(PointK(r, s.params) for r in rs.roots)
    return SolveResult(sols, tuple(rs.simple_flags), s, rs.certified_distinct)


def full_spread_polynomial(alphas: Sequence[float]) -> Polynomial:
    return Polynomial(list(alphas) + [0.0, 1.0])


def _critical_gap(poly: Polynomial) -> float:
    """Smallest |poly(c)| over the real critical points c of poly."""
    dp = poly.derivative()
    if dp.degree < 1:
        return math.inf
    crit = real_roots(dp).roots
    if not crit:
        return math.inf
    return min(abs(poly(c)) for c in crit)


def _certify_spread(alphas: Sequence[float], eps: float) -> RootSet | None:
    k = len(alphas)
    if not all(0.0 < abs(a) < eps for a in alphas):
        return None
    poly = full_spread_polynomial(alphas)
    bound = k * math.sqrt(eps)
    rs = real_roots(poly)
    if not rs.certified_distinct or len(rs.roots) != k + 1 or not all(rs.simple_flags):
        return None
    if any(not 0.0 < abs(x) < bound for x in rs.roots):
        return None
    if sturm_count(poly, -bound, bound) != k + 1:
        return None
    return rs


def construct_full_spread(k: int, eps: float, budget: int = 200) -> PerturbationCoeffs:
    """Coefficients with 0 < |alpha_i| < eps whose polynomial has k+1 distinct small real roots.

    Built inductively: the linear factor x is multiplied in and a small constant
    beta_0 is added, which keeps every previous root (slightly moved) and splits
    off a new one at the origin.  beta_0 starts below the smallest critical value
    of the product and is halved until the root structure certifies.
    """
    if k < 1 or eps <= 0:
        raise ValueError("need k >= 1 and eps > 0")
    alphas = [-eps / 2]
    if _certify_spread(alphas, eps) is None:
        raise BudgetExhausted("base case failed to certify")
    for order in range(1, k):
        shifted = [0.0] + alphas  # coefficients of x * P(x) below the leading term
        prod = full_spread_polynomial(shifted)
        prev_roots = real_roots(full_spread_polynomial(alphas)).roots
        seed = min(eps, _critical_gap(prod)) / 2
        beta = seed
        found = None
        for attempt in range(budget):
            for sign in (1.0, -1.0):
                trial = [sign * beta] + alphas
                rs = _certify_spread(trial, eps)
                if rs is None:
                    continue
                # every old root (and the new root near 0) moves by less than sqrt(eps)
                old = sorted(list(prev_roots) + [0.0])
                if all(abs(a - b) < math.sqrt(eps) for a, b in zip(old, rs.roots)):
                    found = trial
                    break
            if found is not None:
                break
            beta /= 2
            if beta == 0.0:
                break
        if found is None:
            raise BudgetExhausted(f"no admissible beta_0 at order {order + 1}")
        alphas = found
    rs = real_roots(full_spread_polynomial(alphas))
    return PerturbationCoeffs(tuple(alphas), float(eps), tuple(rs.roots))


def _g(k: int, t: float) -> float:
    return t ** (k + 1) / sum(t**i for i in range(k + 1))


def rho_bound(k: int, eps: float) -> float:
    """Inverse of g(t) = t^{k+1} / (t^k + ... + 1) at eps, by bisection.

    Every real root x of x^{k+1} + alpha_{k-1} x^{k-1} + ... + alpha_0 with
    |alpha_i| < eps satisfies |x| < rho_bound(k, eps).
    """
    if k < 1 or eps <= 0:
        raise ValueError("need k >= 1 and eps > 0")
    lo, hi = 0.0, 1.0
    while _g(k, hi) < eps:
        hi *= 2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _g(k, mid) < eps:
            lo = mid
        else:
            hi = mid
    return hi


def rho_rough(k: int, eps: float) -> float:
    """The closed-form estimate max{(k eps)^{1/2}, (k eps)^{1/(k+1)}}."""
    ke = k * eps
    return max(ke**0.5, ke ** (1.0 / (k + 1)))


def _witness_point(coeffs: PerturbationCoeffs) -> PointK:
    a = coeffs.alphas
    return PointK(-a[0], a[1:])


def witness_max_multiplicity(k: int, delta_u: float, delta_v: float,
                             budget: int = 60) -> tuple:
    """A target near the origin with exactly k+1 regular preimages near the origin."""
    if delta_u <= 0 or delta_v <= 0:
        raise ValueError("radii must be positive")
    w = WhitneyMap(k)
    eps = min(delta_v, (delta_u / (2 * k)) ** 2) / 2
    for _ in range(budget):
        try:
            coeffs = construct_full_spread(k, eps)
        except BudgetExhausted:
            eps /= 2
            continue
        s_hat = _witness_point(coeffs)
        res = solve(w, s_hat)
        ok = (
            res.count == k + 1
            and res.certified_distinct
            and all(res.regular)
            and all(is_regular_point(w, p) for p in res.solutions)
            and np.linalg.norm(s_hat.as_tuple()) < delta_v
            and all(np.linalg.norm(p.as_tuple()) < delta_u for p in res.solutions)
        )
        if ok:
            return s_hat, res
        eps /= 2
    raise BudgetExhausted("witness certification failed within budget")


def classify_region(w: WhitneyMap, s: PointK, tol: float = DEFAULT_TOL,
                    simple_tol: float = SIMPLE_ROOT_THRESHOLD) -> RegionVerdict:
    res = solve(w, s, tol, simple_tol)
    return RegionVerdict(s, res.count, sum(1 for r in res.regular if r))


def region_grid(w: WhitneyMap, box: Sequence[tuple], resolution: int,
                tol: float = DEFAULT_TOL, threads: int = 1,
                simple_tol: float = SIMPLE_ROOT_THRESHOLD) -> list:
    """Row-major grid of verdicts over an axis-aligned box (one (lo, hi) pair per axis)."""
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    if len(box) != w.k:
        raise DimensionMismatch(f"box needs {w.k} axes")
    axes = []
    for lo, hi in box:
        if not lo < hi:
            raise ValueError("degenerate box")
        axes.append(np.linspace(lo, hi, resolution).tolist())
    points = [PointK.from_vector(c) for c in itertools.product(*axes)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            return list(ex.map(lambda p: classify_region(w, p, tol, simple_tol), points))
    return [classify_region(w, p, tol, simple_tol) for p in points]


def region_csv(verdicts: Sequence[RegionVerdict], k: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"s_{i}" for i in range(k)] + ["count", "regular_count"])
    for v in verdicts:
        writer.writerow([repr(x) for x in v.s.as_tuple()] + [v.count, v.regular_count])
    return buf.getvalue()
