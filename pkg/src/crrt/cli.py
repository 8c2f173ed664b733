"""
Command-line front end.

Subcommands: ``mesh`` (generate, inspect, export operators), ``verify``
(orthogonality identities and structure checks), ``solve`` (primal solve
with dual postprocessing) and ``poincare`` (potential reconstruction).
Reports are JSON; everything except the ``timings`` block is
deterministic for fixed inputs and seed.

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 usage error,
3 I/O or mesh error.
"""
from __future__ import annotations

import argparse
import ast
import json
import math
import operator
import sys
import time
from typing import Callable

import numpy as np

from . import __version__, duality, ortho, poincare, structure
from . import subspace as sub
from .errors import CrrtError, MeshError, UnsupportedBoundary
from .mesh import Triangulation, generate, read_json, write_json
from .operators import div_matrix, grad_matrix, proj_cr, proj_rt, to_triplets
from .spaces import CrFunction, cr_dofs

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3

VERIFY_CHECKS = ("ortho-a", "ortho-b", "decomp", "surjectivity", "structure", "lifts", "poincare")
DEFAULT_CHECKS = "ortho-a,ortho-b,decomp,surjectivity"
OPERATORS = {"grad": grad_matrix, "div": div_matrix, "proj-cr": proj_cr, "proj-rt": proj_rt}


class UsageError(Exception):
    pass


# --- data expressions -------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}


def parse_expression(text: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in x, y, z into a function of points.

    Only numbers, ``pi``, the coordinates, ``+ - * /``, parentheses and the
    functions sin, cos, exp, abs are accepted.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise UsageError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def check(node):
        if isinstance(node, ast.Expression):
            check(node.body)
        elif isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            check(node.left)
            check(node.right)
        elif isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            check(node.operand)
        elif isinstance(node, ast.Constant) and type(node.value) in (int, float):
            pass
        elif isinstance(node, ast.Name) and node.id in ("x", "y", "z", "pi"):
            pass
        elif (
            isinstance(node, ast.Call)
            and isinstance(node.func, ast.Name)
            and node.func.id in _FUNCS
            and len(node.args) == 1
            and not node.keywords
        ):
            check(node.args[0])
        else:
            raise UsageError(f"unsupported construct in expression {text!r}: {ast.dump(node)[:40]}")

    check(tree)

    def evaluate(node, env):
        if isinstance(node, ast.Expression):
            return evaluate(node.body, env)
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](evaluate(node.left, env), evaluate(node.right, env))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](evaluate(node.operand, env))
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in env:
                raise UsageError(f"coordinate {node.id!r} not available in this dimension")
            return env[node.id]
        return _FUNCS[node.func.id](evaluate(node.args[0], env))

    def f(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        env = {"pi": math.pi}
        env.update({name: points[:, k] for k, name in enumerate("xyz"[: points.shape[1]])})
        with np.errstate(divide="ignore", invalid="ignore"):
            out = evaluate(tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), (points.shape[0],)).copy()

    return f


# --- helpers ----------------------------------------------------------------

def _load_mesh(args) -> Triangulation:
    if args.mesh:
        return read_json(args.mesh)
    if not args.kind:
        raise UsageError("either --mesh or --kind is required")
    params = {}
    if args.kind == "single_simplex":
        params["dim"] = args.dim
    if args.kind in ("square_diag", "cube6"):
        params["n"] = args.n
    if args.kind == "square_diag":
        params["diagonal"] = args.diag
    return generate(args.kind, boundary=args.boundary, **params)


def _split_checks(text: str, allowed) -> list[str]:
    names = [c.strip() for c in text.split(",") if c.strip()]
    unknown = [c for c in names if c not in allowed]
    if unknown:
        raise UsageError(f"unknown check(s): {', '.join(unknown)}; choose from {', '.join(allowed)}")
    return names


def _record(name, verdict, **fields) -> dict:
    return {"name": name, "verdict": verdict, **fields}


def _defect_record(name: str, value: float, tol: float) -> dict:
    return _record(name, "pass" if value <= tol else "fail", residual=value, tol=tol)


def _report(command: str, mesh: Triangulation, checks: list[dict], timings: dict, **extra) -> dict:
    passed = all(c["verdict"] == "pass" or c["verdict"].startswith("skipped") for c in checks)
    return {
        "tool": "crrt",
        "version": __version__,
        "command": command,
        "mesh": mesh.descriptor,
        **extra,
        "checks": checks,
        "passed": passed,
        "timings": timings,
    }


def _emit(report: dict, out: str | None) -> None:
    text = json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n"
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


# --- subcommands ------------------------------------------------------------

def cmd_mesh(args) -> int:
    mesh = _load_mesh(args)
    if args.export:
        text = to_triplets(OPERATORS[args.export](mesh))
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    elif args.info:
        _emit({"mesh": mesh.descriptor, "version": __version__}, args.out)
    elif args.out:
        write_json(mesh, args.out)
    else:
        json.dump(mesh.to_dict(), sys.stdout, indent=1)
        sys.stdout.write("\n")
    return EXIT_OK


def _lift_checks(mesh: Triangulation, tol: float, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        coeffs = rng.standard_normal(proj_rt(mesh).shape[1])
        y = proj_rt(mesh).matrix @ coeffs
        lifted = ortho.lift_to_rt(mesh, y, tol)
        worst = max(worst, float(np.max(np.abs(lifted.barycenter_values().reshape(-1) - y), initial=0.0)))
    records = [_defect_record("lift_round_trip", worst, tol)]
    perp = sub.complement(ortho.projected_cr(mesh))
    worst_div, worst_pi = 0.0, 0.0
    for w in perp.basis.T:
        y = ortho.divfree_preimage(mesh, w, tol)
        worst_div = max(worst_div, float(np.max(np.abs(y.divergence() - w))))
        worst_pi = max(worst_pi, float(np.max(np.abs(y.barycenter_values()))))
    records.append(_defect_record("divfree_preimage_div", worst_div, tol))
    records.append(_defect_record("divfree_preimage_projection", worst_pi, 0.0))
    return records


def _structure_checks(mesh: Triangulation, tol: float, seed: int) -> list[dict]:
    return [
        _defect_record("kronecker_cr", structure.kronecker_defect_cr(mesh), tol),
        _defect_record("kronecker_rt", structure.kronecker_defect_rt(mesh), tol),
        _defect_record("commuting_cr", structure.commuting_defect_cr(mesh), tol),
        _defect_record("commuting_rt", structure.commuting_defect_rt(mesh), tol),
        _defect_record("integration_by_parts", structure.ibp_defect(mesh, seed=seed), tol),
        _defect_record("projection_is_barycenter", structure.projection_defect(mesh), tol),
    ]


def _poincare_checks(mesh: Triangulation, tol: float, seed: int) -> list[dict]:
    records = []
    chains = poincare.dual_cycle_chains(mesh)
    worst = max((float(np.max(np.abs(poincare.cycle_field(mesh, c).divergence()))) for c in chains), default=0.0)
    records.append(_defect_record("cycle_fields_divergence_free", worst, tol))
    try:
        poincare.check_hypotheses(mesh)
    except UnsupportedBoundary as exc:
        reason = f"skipped({exc})"
        records.append(_record("reconstruct_round_trip", reason))
        records.append(_record("identity_a_poincare", reason))
        return records
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        v = CrFunction(mesh, rng.standard_normal(cr_dofs(mesh).size))
        r = poincare.reconstruct(mesh, v.element_gradients(), tol)
        diff = r.coefficients - v.coefficients
        if mesh.dirichlet_sides.size == 0:
            diff = diff - diff.mean()
        worst = max(worst, float(np.max(np.abs(diff), initial=0.0)))
    records.append(_defect_record("reconstruct_round_trip", worst, tol))
    entry = poincare.derive_identity_a_via_poincare(mesh, tol)
    records.append({**entry.to_dict()})
    return records


def cmd_verify(args) -> int:
    checks = _split_checks(args.checks, VERIFY_CHECKS)
    mesh = _load_mesh(args)
    records, timings = [], {}
    suite = {
        "ortho-a": lambda: [ortho.verify_identity_a(mesh, args.tol).to_dict()],
        "ortho-b": lambda: [ortho.verify_identity_b(mesh, args.tol).to_dict()],
        "decomp": lambda: [ortho.verify_decomposition(mesh, args.tol).to_dict()],
        "surjectivity": lambda: [ortho.surjectivity_report(mesh).to_entry().to_dict()],
        "structure": lambda: _structure_checks(mesh, max(args.tol, 1e-12), args.seed),
        "lifts": lambda: _lift_checks(mesh, args.tol, args.seed),
        "poincare": lambda: _poincare_checks(mesh, args.tol, args.seed),
    }
    for name in checks:
        start = time.perf_counter()
        try:
            records.extend(suite[name]())
        except (MeshError, UsageError):
            raise
        except CrrtError as exc:
            records.append(_record(name, "fail", error=f"{type(exc).__name__}: {exc}"))
        timings[name] = time.perf_counter() - start
    extra = {"tol": args.tol, "seed": args.seed}
    if "surjectivity" in checks:
        extra["dimensions"] = ortho.dimension_ledger(mesh)
        extra["notes"] = [ortho.Z_H_NOTE]
    report = _report("verify", mesh, records, timings, **extra)
    _emit(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _integrands(args, mesh: Triangulation):
    if args.phi == "quadratic":
        phi = duality.Quadratic()
    else:
        if args.eps is None or args.eps <= 0:
            raise UsageError("--phi huber needs --eps > 0")
        phi = duality.Huber(args.eps)
    if args.psi == "quadratic":
        if args.alpha <= 0:
            raise UsageError("--alpha must be positive")
        g = parse_expression(args.g)
        values = g(mesh.barycenters)
        if not np.all(np.isfinite(values)):
            raise UsageError(f"expression {args.g!r} is not finite at every barycenter")
        psi = duality.QuadraticFidelity(args.alpha, values)
    else:
        psi = duality.NoZeroOrder()
    return phi, psi


def cmd_solve(args) -> int:
    mesh = _load_mesh(args)
    phi, psi = _integrands(args, mesh)
    params = duality.NewtonParams(tol=args.newton_tol)
    start = time.perf_counter()
    extra = {"phi": args.phi, "psi": args.psi, "eps": args.eps, "alpha": args.alpha, "g": args.g}
    try:
        rep, u, z = duality.duality_report(mesh, phi, psi, params)
    except CrrtError as exc:
        record = _record("duality", "fail", error=f"{type(exc).__name__}: {exc}")
        _emit(_report("solve", mesh, [record], {"solve": time.perf_counter() - start}, **extra), args.out)
        return EXIT_FAIL
    gap_tol = 1e-9 if isinstance(phi, duality.Quadratic) else 1e-7
    checks = [
        _defect_record("relative_gap", rep.relative_gap, gap_tol),
        _defect_record("fenchel_gradient", rep.fenchel_gradient, 1e-9),
        _defect_record("fenchel_zero_order", rep.fenchel_zero_order, 1e-9),
        _defect_record("rt_membership", rep.membership, 1e-9),
    ]
    extra.update(
        I_h=rep.primal,
        D_h=rep.dual,
        gap=rep.gap,
        relative_gap=rep.relative_gap,
        residuals={"fenchel_gradient": rep.fenchel_gradient, "fenchel_zero_order": rep.fenchel_zero_order,
                   "membership": rep.membership, "newton": rep.newton_residual},
        iterations=rep.iterations,
    )
    if args.coefficients:
        extra["u"] = u.coefficients.tolist()
        extra["z"] = z.coefficients.tolist()
    report = _report("solve", mesh, checks, {"solve": time.perf_counter() - start}, **extra)
    _emit(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_poincare(args) -> int:
    mesh = _load_mesh(args)
    start = time.perf_counter()
    try:
        records = _poincare_checks(mesh, args.tol, args.seed)
    except CrrtError as exc:
        records = [_record("poincare", "fail", error=f"{type(exc).__name__}: {exc}")]
    extra = {"tol": args.tol, "seed": args.seed, "dirichlet_components": poincare.dirichlet_components(mesh)}
    report = _report("poincare", mesh, records, {"poincare": time.perf_counter() - start}, **extra)
    _emit(report, args.out)
    return EXIT_OK if report["passed"] else EXIT_FAIL


# --- argument parsing ---------------------------------------------------------

def _mesh_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mesh", help="mesh JSON file")
    p.add_argument("--kind", choices=["single_simplex", "square_diag", "bary3", "two_triangles", "cube6"])
    p.add_argument("--n", type=int, default=1, help="subdivisions per axis")
    p.add_argument("--diag", default="right", choices=["right", "left", "crisscross"])
    p.add_argument("--dim", type=int, default=2, help="dimension of single_simplex")
    p.add_argument("--boundary", default="all-D", help="all-D, all-N or a comma list of Dirichlet parts")
    p.add_argument("--out", help="output file (default stdout)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crrt", description=__doc__.split("\n\n")[0].strip())
    parser.add_argument("--version", action="version", version=f"crrt {__version__}")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("mesh", help="generate or inspect a mesh")
    _mesh_args(p)
    p.add_argument("--info", action="store_true", help="print the mesh descriptor")
    p.add_argument("--export", choices=sorted(OPERATORS), help="write an operator as row/col/value triplets")
    p.set_defaults(func=cmd_mesh)

    p = subs.add_parser("verify", help="run verification checks")
    _mesh_args(p)
    p.add_argument("--checks", default=DEFAULT_CHECKS, help=f"comma list from {','.join(VERIFY_CHECKS)}")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_verify)

    p = subs.add_parser("solve", help="solve the primal problem and recover the dual")
    _mesh_args(p)
    p.add_argument("--phi", choices=["quadratic", "huber"], default="quadratic")
    p.add_argument("--eps", type=float)
    p.add_argument("--psi", choices=["quadratic", "none"], default="quadratic")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--g", default="0", help="data expression in x, y, z")
    p.add_argument("--newton-tol", type=float, default=1e-11)
    p.add_argument("--coefficients", action="store_true", help="include u and z coefficients")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_solve)

    p = subs.add_parser("poincare", help="cycle fields and potential reconstruction")
    _mesh_args(p)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_poincare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"crrt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MeshError, OSError, json.JSONDecodeError) as exc:
        print(f"crrt: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
