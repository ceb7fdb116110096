"""The Neumann problem u'' + f(u) u' + g(u) = h on (0, pi), u'(0) = u'(pi) = 0.

Hypothesis checks on Taylor data in exact arithmetic, closed-form cosine
integrals, a ghost-point finite-difference discretization with exact jets, the
discrete swallow's-tail classification and a multiplicity explorer.

The discrete map is expressed in trapezoid-weighted coordinates x = W^{1/2} u,
y = W^{1/2} F(u), so Euclidean inner products approximate L^2(0, pi) ones and the
linearization at 0 is a symmetric matrix.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
import scipy.integrate
import sympy as sp

from .classify import (
    SingularityVerdict,
    Tolerances,
    classify_trace,
    sigma_map,
    t_map,
)
from .errors import CallablesMissing, NoConvergence
from .opcore import MapOracle

Number = Fraction | float
MAX_DERIV = 6
FAMILIES = ("poly", "family1", "family2", "family3")


def _exact(x) -> Number:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, sp.Rational):
        return Fraction(int(x.p), int(x.q))
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("Taylor data must be finite")
        # decimal literals such as 0.1 are read as the rational they spell
        return Fraction(repr(x))
    if isinstance(x, sp.Basic):
        return float(x)
    return float(x)


# --- Taylor data ---


@dataclass(frozen=True)
class TaylorPair:
    """Derivatives at 0: f(0)..f'''(0) and g(0)..g''''(0), plus optional callables.

    ``f_derivs`` and ``g_derivs`` hold vectorised callables for the derivatives of
    orders 0..MAX_DERIV, used by the discretization.
    """

    f_taylor: tuple
    g_taylor: tuple
    f_derivs: tuple | None = field(default=None, compare=False, repr=False)
    g_derivs: tuple | None = field(default=None, compare=False, repr=False)
    source: dict = field(default_factory=dict, compare=False)

    @property
    def has_callables(self) -> bool:
        return self.f_derivs is not None and self.g_derivs is not None

    @classmethod
    def from_polynomials(cls, f_coeffs: Sequence, g_coeffs: Sequence) -> "TaylorPair":
        """f(u) = sum f_coeffs[j] u^j and g(u) = sum g_coeffs[j] u^j."""
        fc = [_exact(c) for c in f_coeffs]
        gc = [_exact(c) for c in g_coeffs]
        f_t = tuple(math.factorial(j) * (fc[j] if j < len(fc) else 0) for j in range(4))
        g_t = tuple(math.factorial(j) * (gc[j] if j < len(gc) else 0) for j in range(5))
        return cls(f_t, g_t, _poly_derivs(fc), _poly_derivs(gc),
                   {"callable": "poly", "f": [_num(c) for c in fc], "g": [_num(c) for c in gc]})

    @classmethod
    def from_family(cls, name: str, params: dict) -> "TaylorPair":
        f_expr, g_expr = family_expressions(name, params)
        return cls.from_sympy(f_expr, g_expr, {"callable": name, "params": dict(params)})

    @classmethod
    def from_sympy(cls, f_expr, g_expr, source: dict | None = None) -> "TaylorPair":
        u = _U
        f_t = tuple(_exact(sp.nsimplify(sp.diff(f_expr, u, j).subs(u, 0))) if _is_rational_expr(f_expr)
                    else _exact(sp.diff(f_expr, u, j).subs(u, 0)) for j in range(4))
        g_t = tuple(_exact(sp.nsimplify(sp.diff(g_expr, u, j).subs(u, 0))) if _is_rational_expr(g_expr)
                    else _exact(sp.diff(g_expr, u, j).subs(u, 0)) for j in range(5))
        return cls(f_t, g_t, _sympy_derivs(f_expr), _sympy_derivs(g_expr), source or {})

    @classmethod
    def from_json(cls, data: dict) -> "TaylorPair":
        kind = data.get("callable", "poly")
        if kind == "poly":
            return cls.from_polynomials(data["f"], data["g"])
        if kind in FAMILIES:
            return cls.from_family(kind, data.get("params", {}))
        raise ValueError(f"unknown callable kind {kind!r}")

    def to_json(self) -> dict:
        out = dict(self.source)
        out.setdefault("f_taylor", [_num(x) for x in self.f_taylor])
        out.setdefault("g_taylor", [_num(x) for x in self.g_taylor])
        return out


_U = sp.Symbol("u", real=True)


def _is_rational_expr(expr) -> bool:
    return all(isinstance(a, sp.Rational) for a in expr.atoms(sp.Number))


def _num(x):
    if isinstance(x, Fraction):
        return int(x) if x.denominator == 1 else float(x)
    return float(x)


def _poly_derivs(coeffs: Sequence[Number]) -> tuple:
    p = np.polynomial.Polynomial([float(c) for c in coeffs] or [0.0])
    out = []
    for j in range(MAX_DERIV + 1):
        out.append(p.deriv(j) if j else p)
    return tuple(out)


def _sympy_derivs(expr) -> tuple:
    out = []
    for j in range(MAX_DERIV + 1):
        d = sp.diff(expr, _U, j)
        fn = sp.lambdify(_U, d, "numpy")
        out.append(_vectorize(fn))
    return tuple(out)


def _vectorize(fn: Callable) -> Callable:
    def call(u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(np.asarray(fn(u), dtype=float), u.shape).copy()
    return call


def family_expressions(name: str, params: dict) -> tuple:
    """Sympy expressions (f, g) for the named example families."""
    P = {k: (sp.Rational(str(v)) if isinstance(v, (int, float, str)) else v)
         for k, v in params.items() if not isinstance(v, list)}
    a = P.get("a", sp.Integer(1))
    b = P.get("b", sp.Integer(1))
    alpha = P.get("alpha", sp.Integer(1))
    u = _U
    rational_g = (1 + 10 * alpha**2) * u + (3 * alpha * u**2 - 10 * alpha**2 * u) / (u**2 + 1)
    tail_f = sum(sp.Rational(str(c)) * u**n for n, c in enumerate(params.get("c", []), start=4))
    tail_g = sum(sp.Rational(str(c)) * u**m for m, c in enumerate(params.get("gamma", []), start=4))
    if name == "family1":
        return sp.log(sp.cosh(a * u)), rational_g
    if name == "family2":
        return a * u**2 + b * u**3 + tail_f, rational_g
    if name == "family3":
        return (a * u**2 + b * u**3 + tail_f,
                u + 3 * alpha * u**2 + 10 * alpha**2 * u**3 + tail_g)
    raise ValueError(f"unknown family {name!r}")


def family3(a=1, b=1, alpha=1) -> TaylorPair:
    """f = a u^2 + b u^3, g = u + 3 alpha u^2 + 10 alpha^2 u^3 as polynomial callables."""
    return TaylorPair.from_polynomials([0, 0, a, b], [0, 1, 3 * _exact(alpha), 10 * _exact(alpha) ** 2, 0])


# --- hypothesis checks ---


@dataclass(frozen=True)
class ConditionReport:
    checks_I: tuple  # (name, holds, value)
    checks_II: tuple
    step_values: dict  # s3, s4, s5
    exact: bool

    @property
    def swallowtail(self) -> bool:
        return (all(c[1] for c in self.checks_I) and all(c[1] for c in self.checks_II)
                and _is_zero(self.step_values["s3"], self.exact)
                and not _is_zero(self.step_values["s4"], self.exact)
                and not _is_zero(self.step_values["s5"], self.exact))

    def as_dict(self) -> dict:
        return {
            "checks_I": [{"holds": h, "name": n, "value": _num(v)} for n, h, v in self.checks_I],
            "checks_II": [{"holds": h, "name": n, "value": _num(v)} for n, h, v in self.checks_II],
            "exact": self.exact,
            "step_values": {k: _num(v) for k, v in sorted(self.step_values.items())},
            "swallowtail": self.swallowtail,
        }


REL_TOL = 1e-12


def _is_zero(x: Number, exact: bool, scale: float = 1.0) -> bool:
    if exact:
        return x == 0
    return abs(float(x)) <= REL_TOL * max(1.0, scale)


def _equal(x: Number, y: Number, exact: bool) -> bool:
    if exact:
        return x == y
    return abs(float(x) - float(y)) <= REL_TOL * max(1.0, abs(float(x)), abs(float(y)))


def check_conditions(tp: TaylorPair) -> ConditionReport:
    f0, f1, f2, f3 = tp.f_taylor
    g0, g1, g2, g3 = tp.g_taylor[:4]
    exact = all(isinstance(v, Fraction) for v in tp.f_taylor + tp.g_taylor)
    checks_I = (
        ("f(0)=0", _equal(f0, 0, exact), f0),
        ("f'(0)=0", _equal(f1, 0, exact), f1),
        ("g(0)=0", _equal(g0, 0, exact), g0),
        ("g'(0)=1", _equal(g1, 1, exact), g1),
        ("g''(0)!=0", not _equal(g2, 0, exact), g2),
    )
    five_thirds = Fraction(5, 3) if exact else 5.0 / 3.0
    eleven_thirds = Fraction(11, 3) if exact else 11.0 / 3.0
    checks_II = (
        ("g'''(0)=5/3 g''(0)^2", _equal(g3, five_thirds * g2 * g2, exact), g3 - five_thirds * g2 * g2),
        ("f'''(0)!=11/3 f''(0) g''(0)", not _equal(f3, eleven_thirds * f2 * g2, exact),
         f3 - eleven_thirds * f2 * g2),
    )
    steps = {
        "s3": 3 * g3 - 5 * g2 * g2,
        "s4": 5 * g3 - 7 * g2 * g2,
        "s5": -3 * f3 + 11 * f2 * g2,
    }
    return ConditionReport(checks_I, checks_II, steps, exact)


# --- cosine integrals on (0, pi) ---


def _double_factorial(n: int) -> int:
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@dataclass(frozen=True)
class ExactIntegral:
    """rational * pi**pi_power"""

    rational: Fraction
    pi_power: int

    def __float__(self) -> float:
        return float(self.rational) * math.pi**self.pi_power

    def __str__(self) -> str:
        if self.rational == 0:
            return "0"
        return f"{self.rational}*pi" if self.pi_power else str(self.rational)


def cosine_integral_exact(m: int, mu: int = 0, kind: str = "pure") -> ExactIntegral:
    """Closed form of a cosine-power integral over (0, pi).

    kind="pure":     int cos^{2m}
    kind="with_sin": int cos^{2m} sin^{mu}   (mu >= 1; mu = 1 gives 2/(2m+1))
    kind="odd":      int cos^{2m+1} sin^{mu} = 0
    """
    if m < 0 or mu < 0:
        raise ValueError("m and mu must be non-negative")
    if kind == "odd":
        return ExactIntegral(Fraction(0), 0)
    if kind == "pure":
        mu = 0
    elif kind != "with_sin":
        raise ValueError(f"unknown kind {kind!r}")
    p = 2 * m
    if mu % 2 == 0:
        # Wallis: pi (p-1)!! (mu-1)!! / (p+mu)!!
        r = Fraction(_double_factorial(p - 1) * _double_factorial(mu - 1), _double_factorial(p + mu))
        return ExactIntegral(r, 1)
    r = Fraction(2 * _double_factorial(p - 1) * _double_factorial(mu - 1), _double_factorial(p + mu))
    return ExactIntegral(r, 0)


def cosine_integral(m: int, mu: int = 0, kind: str = "pure") -> float:
    return float(cosine_integral_exact(m, mu, kind))


def cosine_integral_quadrature(m: int, mu: int = 0, kind: str = "pure") -> float:
    p = 2 * m + (1 if kind == "odd" else 0)
    q = 0 if kind == "pure" else mu
    val, _ = scipy.integrate.quad(lambda t: math.cos(t) ** p * math.sin(t) ** q, 0.0, math.pi,
                                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return val


# --- closed-form chain quantities for n0 = cos ---


def n1_profile(g2: float, grid: Sequence[float]) -> tuple:
    """n1(t) = g2/3 (cos^2 t - 2) on the grid, with the discrete residual of n1'' + n1 + g2 cos^2.

    Returns (values, max residual) where the residual uses the ghost-point
    second difference on a uniform grid of [0, pi].
    """
    t = np.asarray(grid, dtype=float)
    vals = g2 / 3.0 * (np.cos(t) ** 2 - 2.0)
    if len(t) < 3:
        return vals, 0.0
    h = float(t[1] - t[0])
    d2 = _second_difference(vals, h)
    res = d2 + vals + g2 * np.cos(t) ** 2
    return vals, float(np.max(np.abs(res)))


def closed_form_targets(tp: TaylorPair) -> dict:
    """Continuum values of the cokernel functional on Sigma_1..Sigma_3 for n0 = cos.

    <Sigma_1, cos> = 0, <Sigma_2, cos> = pi/8 s3, <Sigma_3, cos> = 8/15 s5, and the
    1-transversality witness <T_1[cos, cos^2], cos> = 3 pi/8 g''(0).
    """
    rep = check_conditions(tp)
    s3 = float(rep.step_values["s3"])
    s5 = float(rep.step_values["s5"])
    g2 = float(tp.g_taylor[2])
    return {1: 0.0, 2: math.pi / 8 * s3, 3: 8.0 / 15.0 * s5, "t1": 3 * math.pi / 8 * g2}


# --- discretization ---


def _second_difference(u: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(u)
    out[1:-1] = (u[2:] - 2 * u[1:-1] + u[:-2]) / h**2
    out[0] = 2 * (u[1] - u[0]) / h**2
    out[-1] = 2 * (u[-2] - u[-1]) / h**2
    return out


def _first_difference(u: np.ndarray, h: float) -> np.ndarray:
    out = np.zeros_like(u)
    out[1:-1] = (u[2:] - u[:-2]) / (2 * h)
    return out


@dataclass
class DiscreteOperator:
    N: int
    tp: TaylorPair
    grid: np.ndarray
    h: float
    weights: np.ndarray
    oracle: MapOracle

    @property
    def sqrt_w(self) -> np.ndarray:
        return np.sqrt(self.weights)

    def to_weighted(self, u: np.ndarray) -> np.ndarray:
        return self.sqrt_w * u

    def from_weighted(self, x: np.ndarray) -> np.ndarray:
        return x / self.sqrt_w

    def residual(self, u: np.ndarray, rhs: np.ndarray | None = None) -> np.ndarray:
        """F_h(u) - rhs on the grid (unweighted)."""
        val = self.F(u)
        return val if rhs is None else val - rhs

    def F(self, u: np.ndarray) -> np.ndarray:
        fd = self.tp.f_derivs
        gd = self.tp.g_derivs
        return (_second_difference(u, self.h) + fd[0](u) * _first_difference(u, self.h)
                + gd[0](u))

    def jacobian_grid(self, u: np.ndarray) -> np.ndarray:
        """F_h'(u) in grid coordinates."""
        n = self.N + 1
        h = self.h
        fd, gd = self.tp.f_derivs, self.tp.g_derivs
        D2 = np.zeros((n, n))
        idx = np.arange(1, n - 1)
        D2[idx, idx - 1] = 1 / h**2
        D2[idx, idx] = -2 / h**2
        D2[idx, idx + 1] = 1 / h**2
        D2[0, 0], D2[0, 1] = -2 / h**2, 2 / h**2
        D2[-1, -1], D2[-1, -2] = -2 / h**2, 2 / h**2
        D1 = np.zeros((n, n))
        D1[idx, idx - 1] = -1 / (2 * h)
        D1[idx, idx + 1] = 1 / (2 * h)
        du = _first_difference(u, h)
        return D2 + np.diag(fd[1](u) * du + gd[1](u)) + fd[0](u)[:, None] * D1


def discretize(tp: TaylorPair, N: int) -> DiscreteOperator:
    """Ghost-point finite differences on the uniform grid t_i = i pi / N, i = 0..N."""
    if N < 16:
        raise ValueError("N must be at least 16")
    if not tp.has_callables:
        raise CallablesMissing("discretization needs callables for f and g")
    grid = np.linspace(0.0, math.pi, N + 1)
    h = math.pi / N
    weights = np.full(N + 1, h)
    weights[0] = weights[-1] = h / 2
    sw = np.sqrt(weights)
    fd, gd = tp.f_derivs, tp.g_derivs
    op = DiscreteOperator(N, tp, grid, h, weights, None)  # type: ignore[arg-type]

    def evaluate(x):
        return sw * op.F(x / sw)

    def jacobian(x):
        J = op.jacobian_grid(x / sw)
        return sw[:, None] * J / sw[None, :]

    def jet(x, dirs):
        u = x / sw
        vs = [d / sw for d in dirs]
        k = len(vs)
        if k == 1:
            return jacobian(x) @ dirs[0]
        prod = np.prod(vs, axis=0)
        out = (fd[k](u) * _first_difference(u, h) + gd[k](u)) * prod
        for i in range(k):
            others = np.prod([v for j, v in enumerate(vs) if j != i], axis=0)
            out = out + fd[k - 1](u) * others * _first_difference(vs[i], h)
        return sw * out

    op.oracle = MapOracle(N + 1, evaluate, jet, jacobian, f"lienard[N={N}]", symmetric_weights=weights)
    return op


# --- discrete classification ---


def load_taylor_pair(path: str | None) -> TaylorPair:
    """TaylorPair from a JSON file; without a path, the family-3 instance a = b = alpha = 1."""
    if path is None:
        return family3(1, 1, 1)
    with open(path, "r", encoding="utf-8") as fh:
        return TaylorPair.from_json(json.load(fh))


def operator_from_path(location: str, default_n: int = 128) -> DiscreteOperator:
    """``file.json`` or ``file.json:N``; N falls back to the file's "N" entry, then default_n."""
    path, n = location, None
    head, sep, tail = location.rpartition(":")
    if sep and tail.isdigit():
        path, n = head, int(tail)
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    N = int(n if n is not None else data.get("N", default_n))
    return discretize(TaylorPair.from_json(data), N)


def discrete_tolerances(op: DiscreteOperator, base: Tolerances | None = None,
                        range_factor: float = 1.0) -> Tolerances:
    """Tolerances scaled to the O(h^2) consistency error of the scheme.

    The cos mode is an eigenvector of the discrete linearization with eigenvalue
    of size h^2/12, and the stage values carry O(h^2) errors, so both the kernel
    and the in-range thresholds are tied to h^2.
    """
    base = base or Tolerances()
    h2 = op.h**2
    return Tolerances(
        kernel=h2 * h2,
        simple_ratio=base.simple_ratio,
        simple_rel=base.simple_rel,
        range_in=range_factor * h2,
        range_out=max(base.range_out, 2 * range_factor * h2),
        null_space=base.null_space,
        budget=base.budget,
        seed=base.seed,
        fibering_step=base.fibering_step,
        identity=base.identity,
    )


@dataclass(frozen=True)
class DiscreteClassification:
    verdict: SingularityVerdict
    cos_similarity: float
    psi_similarity: float
    stage_values: dict  # h -> psi0 . Sigma_h on the unit-normalised chain
    targets: dict  # h -> closed-form limit times the normalisation constant
    symmetric_values: dict  # T2 / Sigma3 tested against n0 without v1 and n2
    symmetric_agreement: float  # relative gap to the generic path
    sigma_min: float
    N: int

    def as_dict(self) -> dict:
        return {
            "N": self.N,
            "cos_similarity": self.cos_similarity,
            "label": self.verdict.label,
            "psi_similarity": self.psi_similarity,
            "sigma_min": self.sigma_min,
            "stage_values": {str(k): v for k, v in sorted(self.stage_values.items())},
            "stages": [s.as_dict() for s in self.verdict.stages],
            "symmetric_agreement": self.symmetric_agreement,
            "symmetric_values": {str(k): v for k, v in sorted(self.symmetric_values.items())},
            "targets": {str(k): v for k, v in sorted(self.targets.items())},
        }


def _orientation(op: DiscreteOperator, vec: np.ndarray) -> float:
    return 1.0 if float(vec @ op.to_weighted(np.cos(op.grid))) >= 0 else -1.0


def classify_discrete(op: DiscreteOperator, tol: Tolerances | None = None) -> DiscreteClassification:
    """Classify u = 0 for the discrete operator and compare with the closed forms.

    Stage values are psi0 . Sigma_h oriented so that n0 and psi0 point along +cos;
    for n0 = psi0 = sqrt(2/pi) cos their continuum limits are
    (2/pi)^{(h+2)/2} times the closed-form integrals.
    """
    tol = tol or discrete_tolerances(op)
    F = op.oracle
    x0 = np.zeros(F.dim)
    trace = classify_trace(F, x0, tol)
    kd = trace.kernel
    if kd is None:
        return DiscreteClassification(trace.verdict, 0.0, 0.0, {}, {}, {}, 0.0, math.nan, op.N)
    cos_t = np.cos(op.grid)
    n0_grid = op.from_weighted(kd.n0)
    cos_sim = float(abs(n0_grid @ cos_t) / (np.linalg.norm(n0_grid) * np.linalg.norm(cos_t)))
    wcos = op.to_weighted(cos_t)
    psi_sim = float(abs(kd.psi0 @ wcos) / np.linalg.norm(wcos))
    s_n = _orientation(op, kd.n0)
    s_psi = _orientation(op, kd.psi0)
    values = {h: s_psi * s_n ** (h + 1) * float(kd.psi0 @ s) for h, s in trace.sigmas.items()}
    closed = closed_form_targets(op.tp)
    c = math.sqrt(2 / math.pi)
    targets = {h: c ** (h + 2) * closed[h] for h in trace.sigmas if h in closed}
    sym, generic = symmetric_shortcut(op, trace)
    agree = max((abs(sym[key] - generic[key]) / max(1.0, abs(generic[key])) for key in sym),
                default=0.0)
    values_out = dict(values)
    return DiscreteClassification(trace.verdict, cos_sim, psi_sim, values_out, targets, sym,
                                  agree, kd.sigma_min, op.N)


def symmetric_shortcut(op: DiscreteOperator, trace) -> tuple:
    """Stage values computed without v1 and n2, next to the generic ones.

    The linearization at 0 is symmetric and the second derivative there is a
    symmetric trilinear form in weighted coordinates, so
    <F''[n0, v1], n0> = <T_1, n1> and <F''[n2, n0], n0> = <Sigma_2, n1>.
    Both sides are returned as dicts keyed "T2" and "Sigma3" with n0 as the test vector.
    """
    F = op.oracle
    x0 = np.zeros(F.dim)
    n = trace.nchain.n
    D = lambda *d: F.jets(x0, list(d))  # noqa: E731
    sym, generic = {}, {}
    if len(n) < 2:
        return sym, generic
    n0, n1 = n[0], n[1]
    if 2 in trace.vchains and trace.vchains[2] is not None:
        v = trace.vchains[2].v
        v0 = v[0]
        t1 = D(n0, v0)
        sym["T2"] = float(n0 @ (D(n0, n0, v0) + D(n1, v0))) + 2 * float(t1 @ n1)
        generic["T2"] = float(n0 @ t_map(F, x0, n, v, 2))
    if len(n) >= 3:
        sig2 = sigma_map(F, x0, n, 2)
        head = D(n0, n0, n0, n0) + 6 * D(n1, n0, n0) + 3 * D(n1, n1)
        sym["Sigma3"] = float(n0 @ head) + 4 * float(sig2 @ n1)
        generic["Sigma3"] = float(n0 @ sigma_map(F, x0, n, 3))
    return sym, generic


# --- multiplicity search ---


@dataclass(frozen=True)
class MultiplicityResult:
    h: np.ndarray
    beta: tuple
    solutions: tuple
    distances: tuple
    newton_stats: tuple
    count: int
    radius: float
    sweep: tuple = ()  # (beta, count) rows

    @property
    def anomaly(self) -> bool:
        """Five or more local solutions: more than a swallow's tail allows."""
        return self.count >= 5

    def as_dict(self) -> dict:
        return {
            "anomaly": self.anomaly,
            "beta": [float(b) for b in self.beta],
            "count": self.count,
            "count_label": "5+" if self.anomaly else str(self.count),
            "distances": [float(d) for d in self.distances],
            "h": [float(x) for x in self.h],
            "newton_stats": [dict(sorted(s.items())) for s in self.newton_stats],
            "radius": float(self.radius),
            "solutions": [[float(x) for x in s] for s in self.solutions],
            "sweep": [{"beta": [float(b) for b in row[0]], "count": int(row[1])}
                      for row in self.sweep],
        }

    def sweep_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["beta_0", "beta_1", "beta_2", "beta_3", "count"])
        for beta, count in self.sweep:
            w.writerow([repr(float(b)) for b in beta] + [int(count)])
        return buf.getvalue()


@dataclass(frozen=True)
class NewtonRun:
    u: np.ndarray
    iterations: int
    residual: float
    converged: bool


def fourier_rhs(op: DiscreteOperator, beta: Sequence[float]) -> np.ndarray:
    """h(t) = beta_0 + beta_1 cos t + beta_2 cos 2t + beta_3 cos 3t on the grid."""
    out = np.zeros(op.N + 1)
    for j, b in enumerate(beta):
        out += b * np.cos(j * op.grid)
    return out


def newton(op: DiscreteOperator, rhs: np.ndarray, u0: np.ndarray, tol: float = 1e-10,
           max_iter: int = 50, bound: float = math.inf) -> NewtonRun:
    """Damped Newton for F_h(u) = rhs with Armijo backtracking on the residual norm.

    Convergence is declared on the sup-norm of the residual.
    """
    u = np.array(u0, dtype=float)
    r = op.F(u) - rhs
    nr = float(np.linalg.norm(r))
    for it in range(max_iter):
        if float(np.max(np.abs(r))) <= tol:
            return NewtonRun(u, it, float(np.max(np.abs(r))), True)
        try:
            du = np.linalg.solve(op.jacobian_grid(u), -r)
        except np.linalg.LinAlgError:
            break
        step = 1.0
        while step >= 1e-10:
            un = u + step * du
            rn = op.F(un) - rhs
            nrn = float(np.linalg.norm(rn))
            if np.isfinite(nrn) and nrn <= (1.0 - 1e-4 * step) * nr:
                break
            step /= 2
        else:
            break
        u, r, nr = un, rn, nrn
        if float(np.max(np.abs(u))) > bound:
            break
    res = float(np.max(np.abs(r)))
    return NewtonRun(u, max_iter, res, res <= tol)


def reduced_curve(op: DiscreteOperator, rhs: np.ndarray, s_values: Sequence[float],
                  tol: float = 1e-13) -> tuple:
    """Lyapunov-Schmidt reduction along the cos direction.

    For each amplitude s solve F_h(s cos + w) - rhs = lam cos with w orthogonal
    to cos in the trapezoid product; returns (lam(s), w(s)) with NaN where the
    continuation failed.  Solutions of F_h(u) = rhs + b cos are exactly the
    u = s cos + w(s) with lam(s) = b.  Continuation walks outwards from the
    amplitude closest to 0.
    """
    s_values = np.asarray(s_values, dtype=float)
    c = np.cos(op.grid)
    wc = op.weights * c
    n = op.N + 1
    lam = np.full(len(s_values), np.nan)
    ws = np.full((len(s_values), n), np.nan)
    start = int(np.argmin(np.abs(s_values)))

    def solve_at(s, w, lm):
        for _ in range(30):
            u = s * c + w
            G = op.F(u) - rhs - lm * c
            g2 = float(wc @ w)
            if max(float(np.max(np.abs(G))), abs(g2)) <= tol:
                return w, lm, True
            M = np.zeros((n + 1, n + 1))
            M[:n, :n] = op.jacobian_grid(u)
            M[:n, n] = -c
            M[n, :n] = wc
            d = np.linalg.solve(M, -np.append(G, g2))
            w = w + d[:n]
            lm = lm + d[n]
        G = op.F(s * c + w) - rhs - lm * c
        return w, lm, float(np.max(np.abs(G))) <= 1e3 * tol

    for i0, order in ((start, range(start, len(s_values))), (start, range(start - 1, -1, -1))):
        if order.start == start:
            w, lm = np.zeros(n), 0.0
        else:
            w, lm = ws[i0].copy(), lam[i0]
            if not np.isfinite(lm):
                continue
        for i in order:
            w, lm, ok = solve_at(s_values[i], w, lm)
            if not ok:
                break
            ws[i] = w
            lam[i] = lm
    return lam, ws


def _crossing_seeds(s_values, lam, ws, level) -> list:
    seeds = []
    for i in range(len(s_values) - 1):
        a, b = lam[i] - level, lam[i + 1] - level
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0 or a * b < 0:
            theta = a / (a - b)
            seeds.append((s_values[i] + theta * (s_values[i + 1] - s_values[i]),
                          (1 - theta) * ws[i] + theta * ws[i + 1]))
    return seeds


def fourier_starts(op: DiscreteOperator, radius: float, starts: int) -> list:
    """Deterministic starts: u = 0, then +-(radius/2) cos(j t) for j = 0, 1, 2, ..."""
    out = [np.zeros(op.N + 1)]
    j = 0
    while len(out) < starts:
        for sign in (1.0, -1.0):
            if len(out) < starts:
                out.append(sign * radius / 2 * np.cos(j * op.grid))
        j += 1
    return out


def _dedupe(runs: Sequence[NewtonRun], radius: float, gap: float) -> list:
    kept: list = []
    for run in runs:
        if not run.converged or float(np.max(np.abs(run.u))) > radius:
            continue
        if all(float(np.max(np.abs(run.u - k.u))) >= gap for k in kept):
            kept.append(run)
    c = None
    if kept:
        c = np.cos(np.linspace(0.0, math.pi, len(kept[0].u)))
        kept.sort(key=lambda r: float(r.u @ c))
    return kept


def local_radius(op: DiscreteOperator, cap: float = 0.5) -> float:
    """Radius of the region where the reduced equation keeps its quartic shape.

    Along the kernel direction the reduced function behaves like
    a4 s^4 + a5 s^5 + ...; a fifth solution appears near s = -a4/a5, so a
    neighbourhood with at most four solutions must stay inside |s| < |a4/a5|.
    Half of that ratio is returned, never more than ``cap``.
    """
    s = np.linspace(-cap / 10, cap / 10, 41)
    lam, _ = reduced_curve(op, np.zeros(op.N + 1), s)
    ok = np.isfinite(lam)
    a = np.polynomial.polynomial.polyfit(s[ok], lam[ok], 6)
    if abs(a[5]) * cap <= abs(a[4]):
        return float(cap)
    return float(min(cap, 0.5 * abs(a[4] / a[5])))


@dataclass(frozen=True)
class SearchConfig:
    radius: float = 0.5
    box: float = 1e-2
    starts: int = 32
    newton_tol: float = 1e-10
    dedupe_gap: float = 1e-3
    sweep_samples: int = 48
    s_points: int = 241
    seed: int = 0
    threads: int = 1
    local_radius: float = math.inf

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in sorted(self.__dataclass_fields__)}


def count_solutions(op: DiscreteOperator, beta: Sequence[float], cfg: SearchConfig,
                    seeds: Sequence[np.ndarray] = ()) -> list:
    """Distinct converged solutions of F_h(u) = h(beta) inside the radius."""
    rhs = fourier_rhs(op, beta)
    runs = [newton(op, rhs, u0, cfg.newton_tol, 50, bound=4 * max(cfg.radius, 1.0))
            for u0 in list(seeds) + fourier_starts(op, cfg.radius, cfg.starts)]
    return _dedupe(runs, cfg.radius, cfg.dedupe_gap)


def _reduction_seeds(op: DiscreteOperator, beta: Sequence[float], cfg: SearchConfig) -> list:
    s_values = np.linspace(-cfg.radius, cfg.radius, cfg.s_points)
    if cfg.local_radius < cfg.radius:
        fine = np.linspace(-cfg.local_radius, cfg.local_radius, cfg.s_points)
        s_values = np.union1d(s_values, fine)
    rhs0 = fourier_rhs(op, [beta[0], 0.0, beta[2], beta[3]])
    lam, ws = reduced_curve(op, rhs0, s_values)
    c = np.cos(op.grid)
    return [s * c + w for s, w in _crossing_seeds(s_values, lam, ws, beta[1])]


def _cell(op: DiscreteOperator, beta: Sequence[float], cfg: SearchConfig) -> list:
    return count_solutions(op, beta, cfg, _reduction_seeds(op, beta, cfg))


def design_four(op: DiscreteOperator, amplitudes: Sequence[float], max_iter: int = 20) -> np.ndarray:
    """Coefficients beta whose right-hand side has solutions at the given cos-amplitudes.

    Solves lam(s_i; beta_0, beta_2, beta_3) = beta_1 for four amplitudes s_i by
    Newton's method on (beta_0, beta_2, beta_3, beta_1) with a forward-difference
    Jacobian.
    """
    amps = np.asarray(amplitudes, dtype=float)
    grid_s = np.unique(np.concatenate([amps, [0.0]]))

    def resid(x):
        lam, _ = reduced_curve(op, fourier_rhs(op, [x[0], 0.0, x[1], x[2]]), grid_s)
        vals = np.interp(amps, grid_s, lam)
        return vals - x[3]

    x = np.zeros(4)
    for _ in range(max_iter):
        g = resid(x)
        if not np.all(np.isfinite(g)):
            raise NoConvergence("reduced equation could not be continued to the design amplitudes")
        if float(np.max(np.abs(g))) <= 1e-16:
            break
        d = 1e-7
        J = np.column_stack([(resid(x + d * e) - g) / d for e in np.eye(4)])
        x = x - np.linalg.solve(J, g)
    return np.array([x[0], x[3], x[1], x[2]])


def multiplicity_search(op: DiscreteOperator, radius: float | None = None, h_box: float = 1e-2,
                        starts: int = 32, seed: int = 0, threads: int = 1,
                        sweep_samples: int = 48, newton_tol: float = 1e-10,
                        dedupe_gap: float = 1e-3) -> MultiplicityResult:
    """Look for right-hand sides h with the largest number of solutions near 0.

    ``radius`` defaults to :func:`local_radius`.  The sweep covers the corners,
    centre and seeded random samples of the box |beta_j| <= h_box, a designed h
    placing solutions at cos-amplitudes (-3, -1, 1, 3) r/6 with r the smaller
    of the radius and the local radius, designs for seeded jitters of that
    amplitude pattern, and small seeded relative perturbations of those.  Every cell runs damped Newton from the Fourier
    starts and from the zero crossings of the reduced equation; results are
    merged in cell order, so the outcome does not depend on ``threads``.
    """
    local = local_radius(op)
    rad = local if radius is None else float(radius)
    if rad <= 0 or h_box <= 0:
        raise ValueError("radius and box must be positive")
    cfg = SearchConfig(radius=rad, box=h_box, starts=starts, newton_tol=newton_tol,
                       dedupe_gap=dedupe_gap, sweep_samples=sweep_samples, seed=seed,
                       threads=threads, local_radius=local)
    rng = np.random.default_rng(seed)
    betas = [np.zeros(4)]
    for corner in itertools.product((-1.0, 1.0), repeat=4):
        betas.append(h_box * np.array(corner))
    betas.extend(rng.uniform(-h_box, h_box, (sweep_samples, 4)))
    # the four-solution regime lives at the quartic scale, whatever the radius
    r = min(rad, local)
    for i in range(sweep_samples + 1):
        amps = np.array([-3.0, -1.0, 1.0, 3.0])
        if i > 0:
            amps = amps + rng.uniform(-0.4, 0.4, 4) + rng.uniform(-0.3, 0.3)
        amps = amps * r / 6
        try:
            design = design_four(op, amps)
        except (NoConvergence, np.linalg.LinAlgError):
            continue
        if float(np.max(np.abs(design))) > h_box:
            continue
        betas.append(design)
        if i > 0:
            # small relative pushes move the design across the fold lines
            scale = 10.0 ** rng.uniform(-4, -1)
            betas.append(design * (1.0 + scale * rng.uniform(-1, 1, 4)))

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            cells = list(ex.map(lambda b: _cell(op, b, cfg), betas))
    else:
        cells = [_cell(op, b, cfg) for b in betas]

    rows = tuple((tuple(float(x) for x in b), len(sols)) for b, sols in zip(betas, cells))
    best = max(range(len(betas)), key=lambda i: (len(cells[i]), -i))
    sols = cells[best]
    if not any(cells):
        raise NoConvergence("no Newton run converged for any sampled right-hand side")
    dists = tuple(float(np.max(np.abs(a.u - b.u))) for i, a in enumerate(sols) for b in sols[i + 1:])
    stats = tuple({"iterations": r.iterations, "residual": r.residual} for r in sols)
    return MultiplicityResult(fourier_rhs(op, betas[best]), tuple(float(x) for x in betas[best]),
                              tuple(r.u for r in sols), dists, stats, len(sols), rad, rows)
