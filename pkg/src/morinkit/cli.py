"""Command-line interface: ``morinkit whitney|classify|lienard ...``.

Exit codes: 0 success, 1 computation error, 2 bad arguments, 3 undetermined verdict.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import lienard, whitney
from .classify import (
    DEFAULT_TOLERANCES,
    Tolerances,
    classify_point,
    invariance_check,
    verdict_report,
)
from .errors import DimensionMismatch, MorinError, UnknownOracle
from .opcore import oracle_from_key
from .realroots import DEFAULT_TOL, SIMPLE_ROOT_THRESHOLD

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_UNDETERMINED = 0, 1, 2, 3

# name -> (default, meaning); classifier entries mirror Tolerances
TOLERANCES = {
    "root": (DEFAULT_TOL, "relative residual accepted for a refined polynomial root"),
    "simple_root": (SIMPLE_ROOT_THRESHOLD, "|p'(x)| against its term scale for a simple root"),
    "newton": (1e-10, "sup-norm residual for a converged Newton run"),
    "dedupe": (1e-3, "sup-norm gap below which two solutions are the same"),
}
_CLASSIFIER_DOCS = {
    "kernel": "smallest singular value relative to max(1, largest) for a kernel",
    "simple_ratio": "second singular value over smallest for a one-dimensional kernel",
    "simple_rel": "second singular value relative to the largest",
    "range_in": "margin at or below which a vector is in the range",
    "range_out": "margin above which a vector is outside the range",
    "null_space": "relative size of an inactive transversality constraint",
    "budget": "random candidates tried by the transversality search",
    "seed": "seed of the transversality search",
    "fibering_step": "step of the finite differences along the kernel field",
    "identity": "accepted residual of the fibering identities",
}
for _f in fields(Tolerances):
    TOLERANCES[_f.name] = (getattr(DEFAULT_TOLERANCES, _f.name), _CLASSIFIER_DOCS[_f.name])


class UsageError(Exception):
    pass


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, default=_encode) + "\n"


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _box(text: str) -> list:
    out = []
    for part in text.split(","):
        lo, sep, hi = part.partition(":")
        if not sep:
            raise UsageError(f"box axes are lo:hi pairs, got {part!r}")
        out.append((float(lo), float(hi)))
    return out


def _parse_tols(items) -> dict:
    out = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or name not in TOLERANCES:
            raise UsageError(f"unknown tolerance {item!r}; known: {', '.join(sorted(TOLERANCES))}")
        default = TOLERANCES[name][0]
        try:
            out[name] = int(value) if isinstance(default, int) else float(value)
        except ValueError as exc:
            raise UsageError(f"bad value for {name}: {value!r}") from exc
    return out


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("MORINKIT_SEED")
    if env is None or env == "":
        return 0
    try:
        return int(env)
    except ValueError as exc:
        raise UsageError(f"MORINKIT_SEED must be an integer, got {env!r}") from exc


def _classifier_tols(base: Tolerances, overrides: dict, seed: int) -> Tolerances:
    picked = {k: v for k, v in overrides.items() if k in Tolerances.__dataclass_fields__}
    picked.setdefault("seed", seed)
    return replace(base, **picked)


def _tol(ctx, name):
    return ctx["tols"].get(name, TOLERANCES[name][0])


# --- whitney ---


def _point_dict(p: whitney.PointK) -> list:
    return list(p.as_tuple())


def _solve_dict(res: whitney.SolveResult) -> dict:
    return {
        "certified_distinct": res.certified_distinct,
        "count": res.count,
        "regular": list(res.regular),
        "solutions": [_point_dict(p) for p in res.solutions],
        "target": _point_dict(res.target),
    }


def cmd_whitney(args, ctx) -> tuple:
    k = args.k
    if args.sub == "solve":
        s = whitney.PointK.from_vector(_floats(args.target))
        res = whitney.solve(whitney.WhitneyMap(k), s, _tol(ctx, "root"), _tol(ctx, "simple_root"))
        return _solve_dict(res), EXIT_OK
    if args.sub == "witness":
        dv = args.delta if args.delta_v is None else args.delta_v
        s_hat, res = whitney.witness_max_multiplicity(k, args.delta, dv)
        out = _solve_dict(res)
        out.update({"delta_u": args.delta, "delta_v": dv, "k": k, "s_hat": _point_dict(s_hat)})
        return out, EXIT_OK
    if args.sub == "construct":
        pc = whitney.construct_full_spread(k, args.eps)
        return {"alphas": list(pc.alphas), "eps": pc.eps, "k": k, "root_bound": k * math.sqrt(pc.eps),
                "roots": list(pc.roots)}, EXIT_OK
    if args.sub == "rho":
        return {"eps": args.eps, "k": k, "rho_bound": whitney.rho_bound(k, args.eps),
                "rho_rough": whitney.rho_rough(k, args.eps)}, EXIT_OK
    if args.sub == "region":
        verdicts = whitney.region_grid(whitney.WhitneyMap(k), _box(args.box), args.res,
                                       _tol(ctx, "root"), args.threads, _tol(ctx, "simple_root"))
        return whitney.region_csv(verdicts, k), EXIT_OK
    raise UsageError(f"unknown whitney command {args.sub!r}")


# --- classify ---


def cmd_classify(args, ctx) -> tuple:
    base = DEFAULT_TOLERANCES
    if args.map.startswith("lienard:"):
        op = lienard.operator_from_path(args.map.partition(":")[2])
        F = op.oracle
        base = lienard.discrete_tolerances(op)
    else:
        F = oracle_from_key(args.map)
    tol = _classifier_tols(base, ctx["tols"], ctx["seed"])
    u0 = np.zeros(F.dim) if args.point is None else np.array(_floats(args.point))
    if len(u0) != F.dim:
        raise UsageError(f"point has {len(u0)} coordinates, the map needs {F.dim}")
    verdict, nchain, diag = classify_point(F, u0, tol)
    out = verdict_report(verdict, nchain, diag)
    out["map"] = args.map
    out["point"] = u0.tolist()
    if args.invariance:
        rep = invariance_check(F, u0, args.invariance, tol, ctx["seed"], args.threads)
        out["invariance"] = rep.as_dict()
    code = EXIT_UNDETERMINED if verdict.label == "Undetermined" else EXIT_OK
    return out, code


# --- lienard ---


def cmd_lienard(args, ctx) -> tuple:
    if args.sub == "integrals":
        exact = lienard.cosine_integral_exact(args.m, args.mu, args.kind)
        quad = lienard.cosine_integral_quadrature(args.m, args.mu, args.kind)
        return {"closed_form": str(exact), "difference": abs(float(exact) - quad), "kind": args.kind,
                "m": args.m, "mu": args.mu, "quadrature": quad, "value": float(exact)}, EXIT_OK
    tp = lienard.load_taylor_pair(args.input)
    if args.sub == "check":
        out = lienard.check_conditions(tp).as_dict()
        out["taylor_pair"] = tp.to_json()
        return out, EXIT_OK
    if args.sub == "classify":
        op = lienard.discretize(tp, args.n)
        tol = _classifier_tols(lienard.discrete_tolerances(op), ctx["tols"], ctx["seed"])
        res = lienard.classify_discrete(op, tol)
        code = EXIT_UNDETERMINED if res.verdict.label == "Undetermined" else EXIT_OK
        return res.as_dict(), code
    if args.sub == "multiplicity":
        op = lienard.discretize(tp, args.n)
        res = lienard.multiplicity_search(op, args.radius, args.box, args.starts, ctx["seed"],
                                          args.threads, args.samples, _tol(ctx, "newton"),
                                          _tol(ctx, "dedupe"))
        if args.format == "csv":
            return res.sweep_csv(), EXIT_OK
        out = res.as_dict()
        out["N"] = op.N
        return out, EXIT_OK
    raise UsageError(f"unknown lienard command {args.sub!r}")


# --- parser ---


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=None, help="random seed (default: $MORINKIT_SEED or 0)")
    p.add_argument("--threads", type=int, default=1, help="worker threads for parallel loops")
    p.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance")
    p.add_argument("--show-config", action="store_true", help="print the resolved configuration and exit")
    p.add_argument("--out", default=None, help="write the result to this file instead of stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="morinkit", description=__doc__.splitlines()[0])
    top = parser.add_subparsers(dest="command", required=True)

    w = top.add_parser("whitney", help="generalized Whitney maps")
    ws = w.add_subparsers(dest="sub", required=True)
    p = ws.add_parser("solve", parents=[common])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--target", required=True, help="s,s_1,...,s_{k-1}")
    p = ws.add_parser("witness", parents=[common])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--delta", type=float, required=True, help="neighbourhood radius of the solutions")
    p.add_argument("--delta-v", type=float, default=None, help="radius for the target (default: --delta)")
    p = ws.add_parser("construct", parents=[common])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p = ws.add_parser("region", parents=[common])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--box", required=True, help="lo:hi per axis, comma separated")
    p.add_argument("--res", type=int, required=True)
    p = ws.add_parser("rho", parents=[common])
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)

    c = top.add_parser("classify", parents=[common], help="classify a singular point")
    c.add_argument("--map", required=True, help="wk:K, fn:K:N, poly:file.json or lienard:file.json[:N]")
    c.add_argument("--point", default=None, help="comma-separated point (default: origin)")
    c.add_argument("--invariance", type=int, default=0, metavar="T",
                   help="also run T random re-parametrization trials")

    li = top.add_parser("lienard", help="Lienard boundary-value problem with Neumann conditions")
    ls = li.add_subparsers(dest="sub", required=True)
    for name in ("check", "classify", "multiplicity"):
        p = ls.add_parser(name, parents=[common])
        p.add_argument("--input", default=None, help="TaylorPair JSON (default: family3 a=b=alpha=1)")
        if name == "classify":
            p.add_argument("--n", type=int, default=128, help="grid intervals")
        if name == "multiplicity":
            p.add_argument("--n", type=int, default=64, help="grid intervals")
            p.add_argument("--radius", type=float, default=None,
                           help="neighbourhood radius in sup-norm (default: local quartic radius)")
            p.add_argument("--starts", type=int, default=32)
            p.add_argument("--box", type=float, default=1e-2, help="bound on |beta_j|")
            p.add_argument("--samples", type=int, default=48, help="random cells per sweep stage")
            p.add_argument("--format", choices=("json", "csv"), default="json")
    p = ls.add_parser("integrals", parents=[common])
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--mu", type=int, default=0)
    p.add_argument("--kind", choices=("pure", "with_sin", "odd"), default="pure")
    return parser


def _config(args, ctx) -> dict:
    options = {k: v for k, v in sorted(vars(args).items())
               if k not in ("tol", "show_config", "seed", "threads", "out")}
    return {
        "options": options,
        "seed": ctx["seed"],
        "threads": args.threads,
        "tolerances": {name: {"default": TOLERANCES[name][0], "meaning": TOLERANCES[name][1],
                              "value": ctx["tols"].get(name, TOLERANCES[name][0])}
                       for name in sorted(TOLERANCES)},
    }


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


LIST_OPTIONS = ("--target", "--box", "--point")


def _bind_list_values(argv: list) -> list:
    # "-1,0" or "-1:1" would otherwise be read as an unknown flag
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in LIST_OPTIONS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _bind_list_values(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        ctx = {"tols": _parse_tols(args.tol), "seed": _seed(args)}
        if args.threads < 1:
            raise UsageError("--threads must be >= 1")
        if args.show_config:
            _emit(_json(_config(args, ctx)), args.out)
            return EXIT_OK
        handler = {"whitney": cmd_whitney, "classify": cmd_classify, "lienard": cmd_lienard}[args.command]
        result, code = handler(args, ctx)
    except (UsageError, UnknownOracle, DimensionMismatch) as exc:
        print(f"morinkit: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MorinError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        print(f"morinkit: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _emit(result if isinstance(result, str) else _json(result), args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
