"""Smooth-map oracles with multilinear derivative queries, kernel/cokernel data and bordered solves."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    IllConditioned,
    NotInRange,
    NotSimple,
    NotSingular,
    OrderUnsupported,
    StepUnderflow,
    UnknownOracle,
)

MAX_ORDER = 5
KERNEL_TOL = 1e-8
SIMPLE_RATIO = 1e3  # sigma_second >= SIMPLE_RATIO * sigma_min
SIMPLE_REL = 1e-6  # sigma_second >= SIMPLE_REL * sigma_max
RANGE_TOL = 1e-8
SOLVER_TOL = 1e-8
MAX_CONDITION = 1e12

JetFn = Callable[[np.ndarray, Sequence[np.ndarray]], np.ndarray]


class MapOracle:
    """A smooth map R^n -> R^n with derivative queries up to order five.

    Parameters
    ----------
    dim : int
        Domain and target dimension.
    evaluator : callable
        ``u -> F(u)``.
    jets : callable, optional
        ``(u, dirs) -> F^{(m)}(u)[dirs]`` with ``m = len(dirs)``.  When omitted the
        derivatives come from nested central differences with one Richardson level.
    jacobian : callable, optional
        ``u -> F'(u)`` as a dense matrix; defaults to order-1 queries on a basis.
    """

    def __init__(self, dim: int, evaluator: Callable, jets: JetFn | None = None,
                 jacobian: Callable | None = None, name: str = "",
                 symmetric_weights: np.ndarray | None = None):
        self.dim = int(dim)
        self.evaluator = evaluator
        self.jets = jets
        self._jacobian = jacobian
        self.name = name
        self.symmetric_weights = symmetric_weights

    @property
    def exact(self) -> bool:
        return self.jets is not None

    def __call__(self, u) -> np.ndarray:
        return np.asarray(self.evaluator(np.asarray(u, dtype=float)), dtype=float)

    def jacobian(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self._jacobian is not None:
            return np.asarray(self._jacobian(u), dtype=float)
        eye = np.eye(self.dim)
        return np.column_stack([dirderiv(self, u, 1, [eye[:, i]]) for i in range(self.dim)])

    def with_finite_differences(self) -> "MapOracle":
        return MapOracle(self.dim, self.evaluator, None, None, self.name + "[fd]")


def _fd_nested(F: MapOracle, u: np.ndarray, dirs: Sequence[np.ndarray], h: float) -> np.ndarray:
    m = len(dirs)
    acc = np.zeros(F.dim)
    for signs in itertools.product((1.0, -1.0), repeat=m):
        point = u + h * sum(s * d for s, d in zip(signs, dirs))
        acc += np.prod(signs) * F(point)
    return acc / (2.0 * h) ** m


def _fd_step(m: int, u: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)
    # Richardson removes the h^2 term, so truncation is O(h^4): balance against rounding
    return np.finfo(float).eps ** (1.0 / (m + 4)) * scale


def dirderiv(F: MapOracle, u, m: int, dirs: Sequence) -> np.ndarray:
    """Symmetric m-linear value F^{(m)}(u)[dirs[0], ..., dirs[m-1]]."""
    if m < 1 or m > MAX_ORDER:
        raise OrderUnsupported(f"derivative order {m} not in 1..{MAX_ORDER}")
    if len(dirs) != m:
        raise DimensionMismatch(f"order {m} needs {m} directions, got {len(dirs)}")
    u = np.asarray(u, dtype=float)
    ds = [np.asarray(d, dtype=float) for d in dirs]
    if u.shape != (F.dim,) or any(d.shape != (F.dim,) for d in ds):
        raise DimensionMismatch(f"points and directions must have dimension {F.dim}")
    if F.jets is not None:
        return np.asarray(F.jets(u, ds), dtype=float)
    norms = [float(np.linalg.norm(d)) for d in ds]
    if any(nv == 0.0 for nv in norms):
        return np.zeros(F.dim)
    unit = [d / nv for d, nv in zip(ds, norms)]
    h = _fd_step(m, u)
    for d in unit:
        if np.array_equal(u + (h / 2) * d, u):
            raise StepUnderflow("finite-difference step lost in rounding")
    coarse = _fd_nested(F, u, unit, h)
    fine = _fd_nested(F, u, unit, h / 2)
    val = (4.0 * fine - coarse) / 3.0
    return val * math.prod(norms)


# --- polynomial maps with exact jets ---


class PolynomialMap:
    """Polynomial map given per component as a list of (exponent tuple, coefficient).

    Mixed derivatives are exact: each monomial is expanded in formal variables
    s_1..s_m truncated to multilinear terms, and the coefficient of s_1...s_m is
    the derivative in the directions attached to those variables.
    """

    def __init__(self, dim: int, components: Sequence[Sequence[tuple]]):
        if len(components) != dim:
            raise DimensionMismatch("need one component per dimension")
        self.dim = dim
        self.components = []
        for comp in components:
            terms = []
            for exps, coeff in comp:
                exps = tuple(int(e) for e in exps)
                if len(exps) != dim or any(e < 0 for e in exps):
                    raise DimensionMismatch(f"bad exponent vector {exps}")
                terms.append((exps, float(coeff)))
            self.components.append(terms)

    def evaluate(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dim)
        for i, comp in enumerate(self.components):
            out[i] = sum(c * math.prod(u[j] ** e for j, e in enumerate(exps) if e)
                         for exps, c in comp)
        return out

    def jet(self, u: np.ndarray, dirs: Sequence[np.ndarray]) -> np.ndarray:
        m = len(dirs)
        full = (1 << m) - 1
        # factor for coordinate j: u_j + sum_i s_i dirs[i][j]
        factors = []
        for j in range(self.dim):
            f = np.zeros(1 << m)
            f[0] = u[j]
            for i in range(m):
                f[1 << i] = dirs[i][j]
            factors.append(f)
        cache: dict = {}

        def power(j: int, e: int) -> np.ndarray:
            key = (j, e)
            if key not in cache:
                res = np.zeros(1 << m)
                res[0] = 1.0
                for _ in range(e):
                    res = _mul_multilinear(res, factors[j], m)
                cache[key] = res
            return cache[key]

        out = np.zeros(self.dim)
        for i, comp in enumerate(self.components):
            total = 0.0
            for exps, c in comp:
                if sum(exps) < m:
                    continue
                prod = np.zeros(1 << m)
                prod[0] = 1.0
                for j, e in enumerate(exps):
                    if e:
                        prod = _mul_multilinear(prod, power(j, e), m)
                total += c * prod[full]
            out[i] = total
        return out

    def jacobian(self, u: np.ndarray) -> np.ndarray:
        eye = np.eye(self.dim)
        return np.column_stack([self.jet(u, [eye[:, i]]) for i in range(self.dim)])

    def oracle(self, name: str = "") -> MapOracle:
        return MapOracle(self.dim, self.evaluate, self.jet, self.jacobian, name)

    @classmethod
    def from_json(cls, data: dict) -> "PolynomialMap":
        return cls(int(data["dim"]), [[(t[0], t[1]) for t in comp] for comp in data["components"]])


_PAIRS: dict = {}


def _disjoint_pairs(m: int):
    if m not in _PAIRS:
        full = 1 << m
        _PAIRS[m] = [(a, b) for a in range(full) for b in range(full) if not a & b]
    return _PAIRS[m]


def _mul_multilinear(x: np.ndarray, y: np.ndarray, m: int) -> np.ndarray:
    out = np.zeros(1 << m)
    nzx = np.flatnonzero(x)
    nzy = set(np.flatnonzero(y).tolist())
    for a in nzx:
        xa = x[a]
        for b in nzy:
            if not a & b:
                out[a | b] += xa * y[b]
    return out


def whitney_polynomial_map(k: int) -> PolynomialMap:
    """w_k as a polynomial map on (t, t_1, ..., t_{k-1})."""
    def mono(pos_pow):
        e = [0] * k
        for pos, p in pos_pow:
            e[pos] += p
        return tuple(e)

    first = [(mono([(0, k + 1)]), 1.0)]
    for j in range(1, k):
        first.append((mono([(j, 1), (0, j)]), 1.0))
    comps = [first] + [[(mono([(j, 1)]), 1.0)] for j in range(1, k)]
    return PolynomialMap(k, comps)


def fn_polynomial_map(k: int, n: int) -> PolynomialMap:
    """(t, t_1..t_k) -> ((1 - [n == 0]) t^n + t_k t^k + ... + t_1 t, t_1, ..., t_k)."""
    dim = k + 1

    def mono(pos_pow):
        e = [0] * dim
        for pos, p in pos_pow:
            e[pos] += p
        return tuple(e)

    first = [] if n == 0 else [(mono([(0, n)]), 1.0)]
    for j in range(1, k + 1):
        first.append((mono([(j, 1), (0, j)]), 1.0))
    comps = [first] + [[(mono([(j, 1)]), 1.0)] for j in range(1, k + 1)]
    return PolynomialMap(dim, comps)


# --- kernel / cokernel ---


@dataclass(frozen=True)
class KernelData:
    n0: np.ndarray
    psi0: np.ndarray
    sigma_min: float
    sigma_second: float
    sigma_max: float = 0.0
    jacobian: np.ndarray | None = field(default=None, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)


@dataclass(frozen=True)
class RangeTest:
    margin: float
    in_range: bool
    value: float = 0.0


def _sign_fix(v: np.ndarray) -> np.ndarray:
    i = int(np.argmax(np.abs(v)))
    return v if v[i] >= 0 else -v


def kernel_cokernel(F: MapOracle, u0, tol: float = KERNEL_TOL,
                    simple_ratio: float = SIMPLE_RATIO,
                    simple_rel: float = SIMPLE_REL) -> KernelData:
    """Kernel vector and cokernel functional of F'(u0) at a simple singular point.

    Raises NotSingular when sigma_min exceeds ``tol * max(1, sigma_max)`` and
    NotSimple when the second singular value is not clearly separated from zero.
    """
    A = F.jacobian(np.asarray(u0, dtype=float))
    return kernel_from_matrix(A, tol, simple_ratio, simple_rel)


def kernel_from_matrix(A: np.ndarray, tol: float = KERNEL_TOL,
                       simple_ratio: float = SIMPLE_RATIO,
                       simple_rel: float = SIMPLE_REL) -> KernelData:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    U, S, Vt = np.linalg.svd(A)
    smin = float(S[-1])
    smax = float(S[0])
    ssec = float(S[-2]) if len(S) > 1 else math.inf
    if smin > tol * max(1.0, smax):
        raise NotSingular(f"sigma_min = {smin!r}")
    if not (ssec >= simple_ratio * smin and ssec >= simple_rel * smax and ssec > 0.0):
        raise NotSimple(f"second singular value {ssec!r} too small (sigma_min {smin!r})")
    n0 = _sign_fix(Vt[-1].copy())
    psi0 = _sign_fix(U[:, -1].copy())
    return KernelData(n0, psi0, smin, ssec, smax, A)


def range_test(kd: KernelData, w, tol: float = RANGE_TOL, scale: float = 1.0) -> RangeTest:
    """Membership of w in the range of F'(u0), measured by the cokernel functional.

    ``scale`` is the natural size of w when it is built from non-unit chain
    vectors; for unit vectors it is 1 and the margin is |psi0 w| / max(1, |w|).
    """
    w = np.asarray(w, dtype=float)
    value = float(kd.psi0 @ w)
    margin = abs(value) / max(scale, float(np.linalg.norm(w)))
    return RangeTest(margin, margin <= tol, value)


class BorderedSystem:
    """LU factorization of [[A, psi0], [n0^T, 0]], shared by every chain solve."""

    def __init__(self, kd: KernelData):
        A = kd.jacobian
        n = A.shape[0]
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = A
        M[:n, n] = kd.psi0
        M[n, :n] = kd.n0
        self.matrix = M
        self.cond = float(np.linalg.cond(M))
        if not np.isfinite(self.cond) or self.cond > MAX_CONDITION:
            raise IllConditioned(f"bordered matrix condition {self.cond:.3e}")
        self.lu = scipy.linalg.lu_factor(M)
        self.n = n

    def solve(self, b: np.ndarray) -> tuple:
        rhs = np.append(np.asarray(b, dtype=float), 0.0)
        sol = scipy.linalg.lu_solve(self.lu, rhs)
        return sol[: self.n], float(sol[self.n])


def bordered(kd: KernelData) -> BorderedSystem:
    bs = kd._cache.get("bordered")
    if bs is None:
        bs = BorderedSystem(kd)
        kd._cache["bordered"] = bs
    return bs


def bordered_solve(F: MapOracle | None, u0, kd: KernelData, b, tol: float = RANGE_TOL,
                   scale: float = 1.0) -> np.ndarray:
    """Particular solution x of F'(u0) x = b with zero component along n0."""
    b = np.asarray(b, dtype=float)
    rt = range_test(kd, b, tol, scale)
    if not rt.in_range:
        raise NotInRange(f"right-hand side has range margin {rt.margin!r}")
    if kd.jacobian is None:
        raise ValueError("kernel data carries no Jacobian")
    x, _ = bordered(kd).solve(b)
    return x


# --- registry ---


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def oracle_from_key(key: str) -> MapOracle:
    """Build an oracle from ``wk:K``, ``fn:K:N``, ``poly:file.json`` or ``lienard:file.json[:N]``."""
    kind, _, rest = key.partition(":")
    try:
        if kind == "wk":
            k = int(rest)
            return whitney_polynomial_map(k).oracle(key)
        if kind == "fn":
            k, n = (int(x) for x in rest.split(":"))
            return fn_polynomial_map(k, n).oracle(key)
        if kind == "poly":
            return PolynomialMap.from_json(_load_json(rest)).oracle(key)
        if kind == "lienard":
            from .lienard import operator_from_path

            return operator_from_path(rest).oracle
    except (ValueError, KeyError, TypeError) as exc:
        raise UnknownOracle(f"cannot build oracle {key!r}: {exc}") from exc
    raise UnknownOracle(f"unknown oracle kind {kind!r}")
