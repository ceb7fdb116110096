"""Certified real-root counting, isolation and refinement for univariate polynomials.

Counting is exact: float coefficients are binary fractions, so after clearing the
common power-of-two denominator every coefficient is an integer and the Sturm
sequence can be built with integer pseudo-remainders.  Signs at dyadic points are
evaluated in integer arithmetic as well, so a count never depends on rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

from .errors import IdenticallyZero, NonConvergence, NotARoot

SIMPLE_ROOT_THRESHOLD = 1e-8
DEFAULT_TOL = 1e-12
# roots closer than this fraction of the root bound are not separated
DISTINCT_GAP = 2.0**-40
NEWTON_MAX_ITER = 30


@dataclass(frozen=True)
class Polynomial:
    """Real polynomial with coefficients in ascending degree order."""

    coeffs: tuple

    def __init__(self, coeffs: Sequence[float]):
        c = [float(x) for x in coeffs]
        if any(not math.isfinite(x) for x in c):
            raise ValueError("polynomial coefficients must be finite")
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        if not c:
            c = [0.0]
        object.__setattr__(self, "coeffs", tuple(c))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.degree == 0 and self.coeffs[0] == 0.0

    def __call__(self, x: float) -> float:
        acc = 0.0
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def derivative(self) -> "Polynomial":
        if self.degree == 0:
            return Polynomial([0.0])
        return Polynomial([i * c for i, c in enumerate(self.coeffs) if i > 0])

    def scaled(self, factor: float) -> "Polynomial":
        return Polynomial([factor * c for c in self.coeffs])

    def max_abs_coeff(self) -> float:
        return max(abs(c) for c in self.coeffs)


@dataclass(frozen=True)
class RootSet:
    roots: tuple
    simple_flags: tuple
    residuals: tuple
    certified_distinct: bool

    def __len__(self) -> int:
        return len(self.roots)


# --- exact integer polynomial helpers (ascending lists of Python ints) ---


def _trim(a: list) -> list:
    while a and a[-1] == 0:
        a.pop()
    return a


def _primitive(a: list) -> list:
    g = 0
    for x in a:
        g = math.gcd(g, x)
    if g > 1:
        a = [x // g for x in a]
    return a


def _to_int_poly(coeffs: Sequence[float]) -> list:
    fracs = [Fraction(c) for c in coeffs]
    den = 1
    for f in fracs:
        den = max(den, f.denominator)  # all denominators are powers of two
    return _trim([int(f * den) for f in fracs])


def _int_derivative(a: list) -> list:
    return _trim([i * a[i] for i in range(1, len(a))])


def _pseudo_divmod(a: list, b: list):
    """Return (q, r) with c*a = q*b + r for some c > 0."""
    r = list(a)
    db = len(b) - 1
    lb = b[-1]
    q = [0] * max(len(a) - db, 1)
    steps = 0
    while len(r) - 1 >= db and r:
        lr = r[-1]
        shift = len(r) - 1 - db
        r = [lb * x for x in r]
        q = [lb * x for x in q]
        q[shift] += lr
        for i, bi in enumerate(b):
            r[i + shift] -= lr * bi
        _trim(r)
        steps += 1
    if lb < 0 and steps % 2 == 1:
        r = [-x for x in r]
        q = [-x for x in q]
    return _trim(q), r


def _sign_at(a: list, x: Fraction) -> int:
    """Exact sign of a(x) for rational x."""
    if not a:
        return 0
    n, d = x.numerator, x.denominator
    # homogenised Horner: sum a_i n^i d^(deg-i)
    acc = 0
    dpow = 1
    for c in reversed(a):
        acc = acc * n + c * dpow
        dpow *= d
    return (acc > 0) - (acc < 0)


class _Sturm:
    """Sturm sequence of the square-free part of an integer polynomial."""

    def __init__(self, a: list):
        seq = [_primitive(list(a)), _primitive(_int_derivative(a))]
        while True:
            _, r = _pseudo_divmod(seq[-2], seq[-1])
            if not r:
                break
            seq.append(_primitive([-x for x in r]))
        self.gcd = seq[-1]
        if len(self.gcd) > 1:
            seq = [_primitive(_pseudo_divmod(s, self.gcd)[0]) for s in seq]
        self.seq = seq
        self.squarefree = seq[0]

    def variations(self, x: Fraction) -> int:
        count = 0
        last = 0
        for s in self.seq:
            sg = _sign_at(s, x)
            if sg == 0:
                continue
            if last and sg != last:
                count += 1
            last = sg
        return count

    def count(self, a: Fraction, b: Fraction) -> int:
        return self.variations(a) - self.variations(b)


def _check_nonzero(p: Polynomial) -> None:
    if p.is_zero:
        raise IdenticallyZero("polynomial is identically zero")


def root_bound(p: Polynomial) -> float:
    """Cauchy bound: every real root satisfies |x| < 1 + max|a_i / a_n|."""
    _check_nonzero(p)
    lead = abs(p.coeffs[-1])
    return 1.0 + max((abs(c) / lead for c in p.coeffs[:-1]), default=0.0)


def _dyadic_bound(p: Polynomial) -> Fraction:
    b = root_bound(p)
    e = max(0, math.ceil(math.log2(b)) + 1)
    return Fraction(2) ** e


def sturm_count(p: Polynomial, a: float, b: float) -> int:
    """Number of distinct real roots of ``p`` in the half-open interval (a, b]."""
    _check_nonzero(p)
    if not a < b:
        raise ValueError("need a < b")
    if p.degree == 0:
        return 0
    st = _Sturm(_to_int_poly(p.coeffs))
    # zero entries are skipped, which makes the count at a root equal to the
    # count just to its right, so endpoint roots need no perturbation
    return st.count(Fraction(a), Fraction(b))


def _term_scale(p: Polynomial, x: float) -> float:
    return sum(abs(c * x**i) for i, c in enumerate(p.coeffs))


def _residual_scale(p: Polynomial, x: float) -> float:
    # evaluation error grows with the terms, not the coefficients, once |x| > 1
    return max(1.0, p.max_abs_coeff(), _term_scale(p, x))


def is_simple_root(p: Polynomial, x: float, tol: float = SIMPLE_ROOT_THRESHOLD,
                   residual_tol: float | None = None) -> bool:
    """Decide whether ``x`` is a simple root of ``p``.

    The derivative is compared against the magnitude of the terms that make up
    p'(x), so the test is invariant under rescaling of the variable.
    """
    _check_nonzero(p)
    rtol = tol if residual_tol is None else residual_tol
    scale = _residual_scale(p, x)
    if abs(p(x)) > rtol * scale:
        raise NotARoot(f"|p({x!r})| = {abs(p(x))!r} exceeds {rtol * scale!r}")
    dp = p.derivative()
    return abs(dp(x)) > tol * _term_scale(dp, x)


def _float_poly(a: list) -> Polynomial:
    m = max(abs(c) for c in a)
    return Polynomial([float(Fraction(c, m)) for c in a])


def _refine(st: _Sturm, q: Polynomial, lo: Fraction, hi: Fraction) -> float:
    """Locate the single root of the square-free part in (lo, hi]."""
    sq = st.squarefree
    s_hi = _sign_at(sq, hi)
    if s_hi == 0:
        return float(hi)
    # exact bisection until the bracket is narrow in relative terms
    for _ in range(200):
        width = hi - lo
        mag = max(abs(lo), abs(hi))
        if width <= mag * Fraction(1, 2**30) or width <= Fraction(1, 2**1000):
            break
        mid = (lo + hi) / 2
        sm = _sign_at(sq, mid)
        if sm == 0:
            return float(mid)
        if sm == s_hi:
            hi = mid
        else:
            lo = mid
    flo, fhi = float(lo), float(hi)
    x = 0.5 * (flo + fhi)
    dq = q.derivative()
    for _ in range(NEWTON_MAX_ITER):
        d = dq(x)
        if d == 0.0:
            break
        step = q(x) / d
        nx = x - step
        if not (flo <= nx <= fhi):
            break
        x = nx
        if abs(step) <= 4 * math.ulp(x) or step == 0.0:
            break
    if _accept(st, x, lo, hi):
        return x
    # Newton wandered or stalled: finish with exact bisection to float resolution
    for _ in range(2000):
        mid = (lo + hi) / 2
        fm = float(mid)
        if fm in (float(lo), float(hi)):
            return float(hi) if _sign_at(sq, hi) == 0 else fm
        sm = _sign_at(sq, mid)
        if sm == 0:
            return fm
        if sm == s_hi:
            hi = mid
        else:
            lo = mid
    raise NonConvergence("bisection did not reach float resolution")


def _accept(st: _Sturm, x: float, lo: Fraction, hi: Fraction) -> bool:
    fx = Fraction(x)
    if not lo < fx <= hi:
        return False
    sq = st.squarefree
    s = _sign_at(sq, fx)
    if s == 0:
        return True
    # x must be within one ulp of the sign change
    u = Fraction(math.ulp(x))
    return _sign_at(sq, fx - u) != s or _sign_at(sq, fx + u) != s


def real_roots(p: Polynomial, tol: float = DEFAULT_TOL,
               simple_tol: float = SIMPLE_ROOT_THRESHOLD) -> RootSet:
    """All distinct real roots of ``p`` in increasing order."""
    _check_nonzero(p)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if p.degree == 0:
        return RootSet((), (), (), True)
    st = _Sturm(_to_int_poly(p.coeffs))
    q = _float_poly(st.squarefree)
    B = _dyadic_bound(p)
    min_width = B * Fraction(DISTINCT_GAP)
    lo0, hi0 = -B, B
    stack = [(lo0, hi0, st.variations(lo0), st.variations(hi0))]
    isolated = []
    clusters = []
    while stack:
        lo, hi, vlo, vhi = stack.pop()
        n = vlo - vhi
        if n == 0:
            continue
        if n == 1:
            isolated.append((lo, hi))
            continue
        if hi - lo < min_width:
            clusters.append((lo, hi))
            continue
        mid = (lo + hi) / 2
        vmid = st.variations(mid)
        stack.append((lo, mid, vlo, vmid))
        stack.append((mid, hi, vmid, vhi))
    roots = [(_refine(st, q, lo, hi), True) for lo, hi in isolated]
    roots += [(float((lo + hi) / 2), False) for lo, hi in clusters]
    roots.sort(key=lambda r: r[0])

    dp = p.derivative()
    out_roots, flags, residuals = [], [], []
    for x, _ in roots:
        res = abs(p(x))
        bound = tol * _residual_scale(p, x)
        if res > bound and not clusters:
            raise NonConvergence(f"residual {res!r} above {bound!r} at {x!r}")
        out_roots.append(x)
        residuals.append(res)
        flags.append(abs(dp(x)) > simple_tol * _term_scale(dp, x))
    distinct = not clusters and all(
        b > a for a, b in zip(out_roots, out_roots[1:]))
    return RootSet(tuple(out_roots), tuple(flags), tuple(residuals), distinct)
