"""Pointwise classification of simple singularities: fold, cusp, swallow's tail, butterfly.

At a point u0 with one-dimensional kernel n0 and cokernel functional psi0 the
classifier builds the n-chain n0, n1, n2, n3 from successive bordered solves and
tests the combinations Sigma_h[n0..n_{h-1}] for membership in the range of F'(u0).
Between two Sigma stages it checks h-transversality, i.e. whether some v0 makes
T_1..T_{h-1} land in the range while T_h does not.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ChainTooShort, KernelJump, NotSingular
from .opcore import (
    KERNEL_TOL,
    SIMPLE_RATIO,
    SIMPLE_REL,
    KernelData,
    MapOracle,
    bordered,
    dirderiv,
    kernel_cokernel,
    range_test,
)

SINGULARITY_NAMES = ("Fold", "Cusp", "SwallowsTail", "Butterfly")
MAX_LEVEL = 4


@dataclass(frozen=True)
class Tolerances:
    """Every numeric threshold used by the classifier."""

    kernel: float = KERNEL_TOL
    simple_ratio: float = SIMPLE_RATIO
    simple_rel: float = SIMPLE_REL
    range_in: float = 1e-8  # margin at or below: in the range
    range_out: float = 1e-4  # margin above: outside the range
    null_space: float = 1e-8  # relative size of an inactive transversality constraint
    budget: int = 64
    seed: int = 0
    fibering_step: float = 1e-3
    identity: float = 1e-5

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in sorted(self.__dataclass_fields__)}


DEFAULT_TOLERANCES = Tolerances()


@dataclass(frozen=True)
class NChain:
    n: tuple

    def __len__(self) -> int:
        return len(self.n)


@dataclass(frozen=True)
class VChain:
    v: tuple

    def __len__(self) -> int:
        return len(self.v)


@dataclass(frozen=True)
class Stage:
    name: str
    margin: float
    in_range: bool | None  # None marks the gray zone
    value: float = 0.0

    def as_dict(self) -> dict:
        return {"in_range": self.in_range, "margin": self.margin, "name": self.name}


@dataclass(frozen=True)
class SingularityVerdict:
    label: str
    stages: tuple = ()

    @property
    def margins(self) -> tuple:
        return tuple(s.margin for s in self.stages)

    @property
    def booleans(self) -> tuple:
        return tuple(s.in_range for s in self.stages)


@dataclass(frozen=True)
class FiberingDiagnostics:
    phi: tuple  # phi(u0), phi_1(u0), ...
    sigma: tuple  # sigma_1(u0), ...
    identity_residuals: tuple  # |F'(u0) phi_h(u0) + sigma_h(u0)| for reachable h
    reachable: int = 0

    def as_dict(self) -> dict:
        return {"identity_residuals": [float(r) for r in self.identity_residuals]}


@dataclass(frozen=True)
class Perturbation:
    """A member of the representative-change family used by the invariance harness.

    n0 -> alpha n0, n_j -> (re-solved n_j) + shifts[j-1] n0, and
    v_j -> (re-solved v_j) + vshifts[j-1] (covector . v0) n0.
    """

    alpha: float = 1.0
    shifts: tuple = (0.0, 0.0, 0.0)
    vshifts: tuple = (0.0, 0.0, 0.0)
    covector: np.ndarray | None = None


@dataclass
class ClassificationTrace:
    verdict: SingularityVerdict
    nchain: NChain
    kernel: KernelData | None
    vchains: dict = field(default_factory=dict)
    sigmas: dict = field(default_factory=dict)
    reached: int = 0  # number of levels h with u0 h-transverse and not an h-singularity


# --- the multilinear combinations ---


def _D(F: MapOracle, u0, *dirs) -> np.ndarray:
    return dirderiv(F, u0, len(dirs), list(dirs))


def sigma_map(F: MapOracle, u0, nchain, k: int) -> np.ndarray:
    n = nchain.n if isinstance(nchain, NChain) else tuple(nchain)
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    if len(n) < k:
        raise ChainTooShort(f"Sigma_{k} needs {k} chain vectors, got {len(n)}")
    D = lambda *d: _D(F, u0, *d)  # noqa: E731
    if k == 1:
        return D(n[0], n[0])
    n0, n1 = n[0], n[1]
    if k == 2:
        return D(n0, n0, n0) + 3 * D(n1, n0)
    n2 = n[2]
    if k == 3:
        return (D(n0, n0, n0, n0) + 6 * D(n1, n0, n0) + 3 * D(n1, n1)
                + 4 * D(n2, n0))
    n3 = n[3]
    return (D(n0, n0, n0, n0, n0) + 10 * D(n1, n0, n0, n0) + 10 * D(n2, n0, n0)
            + 15 * D(n1, n1, n0) + 10 * D(n2, n1) + 5 * D(n3, n0))


def t_map(F: MapOracle, u0, nchain, vchain, k: int) -> np.ndarray:
    n = nchain.n if isinstance(nchain, NChain) else tuple(nchain)
    v = vchain.v if isinstance(vchain, VChain) else tuple(vchain)
    if not 1 <= k <= 4:
        raise ValueError("k must be in 1..4")
    if len(n) < k or len(v) < k:
        raise ChainTooShort(f"T_{k} needs {k} vectors in each chain")
    D = lambda *d: _D(F, u0, *d)  # noqa: E731
    n0, v0 = n[0], v[0]
    if k == 1:
        return D(n0, v0)
    n1, v1 = n[1], v[1]
    if k == 2:
        return D(n0, n0, v0) + 2 * D(n0, v1) + D(n1, v0)
    n2, v2 = n[2], v[2]
    if k == 3:
        return (D(n0, n0, n0, v0) + 3 * D(n0, n0, v1) + 3 * D(n1, n0, v0)
                + 3 * D(n0, v2) + 3 * D(n1, v1) + D(n2, v0))
    n3, v3 = n[3], v[3]
    return (D(n0, n0, n0, n0, v0) + 4 * D(n0, n0, n0, v1) + 6 * D(n1, n0, n0, v0)
            + 6 * D(n0, n0, v2) + 12 * D(n1, n0, v1) + 4 * D(n2, n0, v0)
            + 3 * D(n1, n1, v0) + 4 * D(n0, v3) + 4 * D(n2, v1) + 6 * D(n1, v2)
            + D(n3, v0))


# --- range decisions ---


def three_way(margin: float, tol: Tolerances) -> bool | None:
    """True: in the range; False: outside; None: undecidable gray zone."""
    if margin <= tol.range_in:
        return True
    if margin > tol.range_out:
        return False
    return None


def _stage(name: str, kd: KernelData, w: np.ndarray, scale: float, tol: Tolerances) -> Stage:
    rt = range_test(kd, w, tol.range_in, scale)
    return Stage(name, rt.margin, three_way(rt.margin, tol), rt.value)


# --- transversality ---


@dataclass(frozen=True)
class TransversalityOutcome:
    transverse: bool | None
    vchain: VChain | None
    margin: float
    admissible_dim: int = 0

    def __iter__(self):
        yield self.transverse
        yield self.vchain


def _vchain_from(F, u0, kd, n, v0, level, pert: Perturbation | None) -> tuple:
    """v-chain v0..v_{level-1} and T_1..T_level, each linear in v0."""
    bs = bordered(kd)
    vs = [v0]
    ts = []
    for j in range(1, level + 1):
        tj = t_map(F, u0, n, vs, j)
        ts.append(tj)
        if j < level:
            vj, _ = bs.solve(-tj)
            if pert is not None and pert.covector is not None:
                vj = vj + pert.vshifts[j - 1] * float(pert.covector @ v0) * kd.n0
            vs.append(vj)
    return vs, ts


def transversality_test(F: MapOracle, u0, nchain, k: int, budget: int | None = None,
                        tol: Tolerances = DEFAULT_TOLERANCES,
                        kd: KernelData | None = None,
                        perturbation: Perturbation | None = None) -> TransversalityOutcome:
    """Search for v0 with T_1..T_{k-1} in the range and T_k outside it.

    Every constraint psi0 T_j(v0) = 0 is a linear functional of v0, so the
    admissible set is a subspace; an orthonormal basis of it is tried first,
    then ``budget`` random unit vectors inside it.
    """
    n = nchain.n if isinstance(nchain, NChain) else tuple(nchain)
    if len(n) < k:
        raise ChainTooShort(f"level {k} needs {k} chain vectors")
    budget = tol.budget if budget is None else budget
    u0 = np.asarray(u0, dtype=float)
    if kd is None:
        kd = kernel_cokernel(F, u0, tol.kernel, tol.simple_ratio, tol.simple_rel)
    dim = F.dim
    nscale = float(np.linalg.norm(n[0]))
    eye = np.eye(dim)
    cols = [_vchain_from(F, u0, kd, n, eye[:, i], k, perturbation) for i in range(dim)]
    # constraint rows, each normalised by its natural size
    rows = []
    for j in range(1, k):
        tj = np.column_stack([c[1][j - 1] for c in cols])
        vals = kd.psi0 @ tj
        rows.append(vals / max(nscale**j, float(np.max(np.linalg.norm(tj, axis=0)))))
    Tk = np.column_stack([c[1][k - 1] for c in cols])
    if rows:
        L = np.vstack(rows)
        _, S, Vt = np.linalg.svd(L)
        rank = int(np.sum(S > tol.null_space))
        Q = Vt[rank:].T
    else:
        Q = np.eye(dim)
    if Q.shape[1] == 0:
        return TransversalityOutcome(False, None, 0.0, 0)
    rng = np.random.default_rng([tol.seed, k])
    candidates = [Q[:, i] for i in range(Q.shape[1])]
    for _ in range(budget):
        c = rng.normal(size=Q.shape[1])
        candidates.append(Q @ (c / np.linalg.norm(c)))
    best, best_v = -1.0, None
    for v0 in candidates:
        w = Tk @ v0
        m = range_test(kd, w, tol.range_in, nscale**k * float(np.linalg.norm(v0))).margin
        if m > best:
            best, best_v = m, v0
    verdict = three_way(best, tol)
    transverse = None if verdict is None else (not verdict)
    vchain = None
    if transverse:
        vs, _ = _vchain_from(F, u0, kd, n, best_v, k, perturbation)
        vchain = VChain(tuple(vs))
    return TransversalityOutcome(transverse, vchain, best, Q.shape[1])


# --- the chain ---


def _trace(F: MapOracle, u0, tol: Tolerances, perturbation: Perturbation | None,
           symmetric_check: bool = False) -> ClassificationTrace:
    u0 = np.asarray(u0, dtype=float)
    try:
        kd = kernel_cokernel(F, u0, tol.kernel, tol.simple_ratio, tol.simple_rel)
    except NotSingular:
        return ClassificationTrace(SingularityVerdict("Regular"), NChain(()), None)
    pert = perturbation or Perturbation()
    n = [pert.alpha * kd.n0]
    nscale = abs(pert.alpha)
    stages = []
    label = None
    trace = ClassificationTrace(SingularityVerdict(""), NChain(()), kd)
    reached = 0
    for h in range(1, MAX_LEVEL + 1):
        sig = sigma_map(F, u0, n, h)
        trace.sigmas[h] = sig
        st = _stage(f"sigma_{h}", kd, sig, nscale ** (h + 1), tol)
        stages.append(st)
        if st.in_range is False:
            label = SINGULARITY_NAMES[h - 1]
            break
        if st.in_range is None:
            label = "Undetermined"
            break
        tr = transversality_test(F, u0, n, h, tol=tol, kd=kd, perturbation=pert)
        stages.append(Stage(f"transverse_{h}", tr.margin,
                            None if tr.transverse is None else (not tr.transverse)))
        if tr.transverse is None:
            label = "Undetermined"
            break
        if not tr.transverse:
            label = f"MaxTransverse({h - 1})"
            break
        trace.vchains[h] = tr.vchain
        reached = h
        if h == MAX_LEVEL:
            label = f"TransverseAtLeast({MAX_LEVEL})"
            break
        nh, _ = bordered(kd).solve(-sig)
        n.append(nh + pert.shifts[h - 1] * kd.n0)
    trace.verdict = SingularityVerdict(label, tuple(stages))
    trace.nchain = NChain(tuple(n))
    trace.reached = reached
    return trace


def classify_point(F: MapOracle, u0, tol: Tolerances = DEFAULT_TOLERANCES,
                   perturbation: Perturbation | None = None,
                   diagnostics: bool = True) -> tuple:
    """Classify u0; returns (verdict, n-chain, fibering diagnostics or None)."""
    trace = _trace(F, u0, tol, perturbation)
    diag = None
    if diagnostics and trace.kernel is not None and perturbation is None:
        try:
            diag = fibering_diagnostics(F, u0, trace.nchain, tol.fibering_step,
                                        reachable=trace.reached, kd=trace.kernel)
        except KernelJump:
            diag = None
    return trace.verdict, trace.nchain, diag


def classify_trace(F: MapOracle, u0, tol: Tolerances = DEFAULT_TOLERANCES,
                   perturbation: Perturbation | None = None) -> ClassificationTrace:
    return _trace(F, u0, tol, perturbation)


# --- fibering diagnostics ---


def _phi_at(F: MapOracle, u: np.ndarray, ref: np.ndarray) -> np.ndarray:
    _, _, Vt = np.linalg.svd(F.jacobian(u))
    v = Vt[-1]
    c = float(v @ ref)
    if abs(c) < 0.5:
        raise KernelJump("smallest singular direction turned away along the stencil")
    return v if c > 0 else -v


def _phi_k(F: MapOracle, u: np.ndarray, k: int, h: float, ref: np.ndarray) -> np.ndarray:
    """phi_k(u) = phi_{k-1}'(u) phi(u) by central differences with one Richardson level."""
    phi = _phi_at(F, u, ref)
    if k == 0:
        return phi

    def central(step):
        plus = _phi_k(F, u + step * phi, k - 1, h, phi)
        minus = _phi_k(F, u - step * phi, k - 1, h, phi)
        return (plus - minus) / (2 * step)

    return (4 * central(h / 2) - central(h)) / 3


def fibering_diagnostics(F: MapOracle, u0, nchain, step: float = 1e-3, reachable: int | None = None,
                         kd: KernelData | None = None) -> FiberingDiagnostics:
    """phi_k(u0) from the smallest singular vector field, sigma_k(u0), and identity residuals."""
    u0 = np.asarray(u0, dtype=float)
    n = nchain.n if isinstance(nchain, NChain) else tuple(nchain)
    ref = n[0] / np.linalg.norm(n[0])
    if reachable is None:
        reachable = max(len(n) - 1, 0)
    top = min(reachable, 3)
    phis = [_phi_k(F, u0, k, step, ref) for k in range(top + 1)]
    sigmas = []
    for k in range(1, min(len(phis), 4) + 1):
        sigmas.append(sigma_map(F, u0, phis[:k], k))
    A = kd.jacobian if kd is not None else F.jacobian(u0)
    residuals = [float(np.linalg.norm(A @ phis[h] + sigmas[h - 1])) for h in range(1, top + 1)]
    return FiberingDiagnostics(tuple(phis), tuple(sigmas), tuple(residuals), top)


# --- invariance harness ---


@dataclass(frozen=True)
class InvarianceReport:
    trials: int
    label_agreement: int
    stage_agreement: int
    max_scaling_error: float
    base_label: str
    failures: tuple = ()

    @property
    def passed(self) -> bool:
        return self.label_agreement == self.trials and self.stage_agreement == self.trials

    def as_dict(self) -> dict:
        return {
            "base_label": self.base_label,
            "failures": list(self.failures),
            "label_agreement": self.label_agreement,
            "max_scaling_error": self.max_scaling_error,
            "passed": self.passed,
            "stage_agreement": self.stage_agreement,
            "trials": self.trials,
        }


def random_perturbation(rng: np.random.Generator, dim: int) -> Perturbation:
    alpha = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
    cov = rng.normal(size=dim)
    return Perturbation(alpha, tuple(rng.uniform(-2, 2, 3)), tuple(rng.uniform(-2, 2, 3)),
                        cov / np.linalg.norm(cov))


def predicted_sigmas(base: dict, pert: Perturbation) -> dict:
    """Sigma_h on the perturbed chain, from the base values and the shift coefficients."""
    a = pert.alpha
    c1, c2, c3 = pert.shifts
    S = base
    out = {}
    if 1 in S:
        out[1] = a**2 * S[1]
    if 2 in S:
        out[2] = a**3 * S[2] + 3 * c1 * a * S[1]
    if 3 in S:
        out[3] = a**4 * S[3] + 6 * c1 * a**2 * S[2] + (4 * c2 * a + 3 * c1**2) * S[1]
    if 4 in S:
        out[4] = (a**5 * S[4] + 10 * c1 * a**3 * S[3]
                  + (10 * c2 * a**2 + 15 * c1**2 * a) * S[2]
                  + (5 * c3 * a + 10 * c2 * c1) * S[1])
    return out


def _one_trial(F, u0, tol, base: ClassificationTrace, seed: int, index: int):
    rng = np.random.default_rng([seed, index])
    pert = random_perturbation(rng, F.dim)
    tr = _trace(F, u0, tol, pert)
    same_label = tr.verdict.label == base.verdict.label
    same_stages = tr.verdict.booleans == base.verdict.booleans
    err = 0.0
    for h, pred in predicted_sigmas(base.sigmas, pert).items():
        if h in tr.sigmas:
            got = tr.sigmas[h]
            err = max(err, float(np.linalg.norm(got - pred))
                      / max(1.0, float(np.linalg.norm(pred))))
    return same_label, same_stages, err


def invariance_check(F: MapOracle, u0, trials: int = 200, tol: Tolerances = DEFAULT_TOLERANCES,
                     seed: int = 0, threads: int = 1) -> InvarianceReport:
    """Re-run the classification under random changes of chain representatives."""
    base = _trace(F, u0, tol, None)
    if base.kernel is None:
        return InvarianceReport(trials, trials, trials, 0.0, base.verdict.label)
    run = lambda i: _one_trial(F, u0, tol, base, seed, i)  # noqa: E731
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(run, range(trials)))
    else:
        results = [run(i) for i in range(trials)]
    failures = tuple(i for i, r in enumerate(results) if not (r[0] and r[1]))
    return InvarianceReport(
        trials,
        sum(1 for r in results if r[0]),
        sum(1 for r in results if r[1]),
        max((r[2] for r in results), default=0.0),
        base.verdict.label,
        failures,
    )


# --- serialization ---


def verdict_report(verdict: SingularityVerdict, nchain: NChain,
                   diag: FiberingDiagnostics | None) -> dict:
    return {
        "diagnostics": diag.as_dict() if diag is not None else {"identity_residuals": []},
        "label": verdict.label,
        "nchain": [[float(x) for x in v] for v in nchain.n],
        "stages": [s.as_dict() for s in verdict.stages],
    }


def dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=True)
