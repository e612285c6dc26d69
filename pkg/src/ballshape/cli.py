"""Command line front end.

Subcommands: generate, certify, reach, eval, minimize, converge, radii.
Exit codes: 0 success, 1 domain failure (not certified, infeasible, ...),
2 I/O or parse error. Machine-readable output is JSON with floats written to
17 significant digits.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .certifier import certify_ball_condition, estimate_reach
from .charts import curvature_field
from .constants import radii_table
from .convergence import SequenceSpec, run_sequence
from .errors import BallShapeError, ParseError
from .functionals import ConstraintSpec, FunctionalSpec, evaluate, load_spec
from .mesh import load_mesh, save_mesh
from .optimizer import OptimizerConfig, minimize
from .primitives import Ellipsoid, Icosphere, PerturbedSphere, Torus, generate

logger = logging.getLogger("ballshape")

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2


# ------------------------------------------------------------------- JSON
def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2) -> str:
    """JSON text with floats at 17 significant digits (non-finite values become null)."""
    return _encode(obj, indent, 0) + "\n"


def _emit(obj, path=None):
    text = dumps(obj)
    if path is None:
        sys.stdout.write(text)
    else:
        try:
            with open(path, "w") as fh:
                fh.write(text)
        except OSError as exc:
            raise ParseError(f"cannot write {path}: {exc}") from None


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"cannot read {path}: {exc}") from None


# --------------------------------------------------------------- commands
def cmd_generate(args):
    shape = {
        "icosphere": lambda: Icosphere(args.radius, args.subdiv),
        "torus": lambda: Torus(args.R, args.r, args.nu, args.nv),
        "ellipsoid": lambda: Ellipsoid(args.a, args.b, args.c, args.subdiv),
        "perturbed": lambda: PerturbedSphere(args.radius, args.amp, args.mode, args.subdiv),
    }[args.shape]()
    mesh = generate(shape)
    save_mesh(mesh, args.out)
    _emit({"out": args.out, "vertices": mesh.n_vertices, "faces": mesh.n_faces, "genus": mesh.genus()})
    return EXIT_OK


def cmd_certify(args):
    mesh = load_mesh(args.mesh)
    field = curvature_field(mesh)
    cert = certify_ball_condition(mesh, field, args.epsilon, args.tolerance)
    _emit(cert.to_dict(), args.out)
    return EXIT_OK if cert.passed else EXIT_DOMAIN


def cmd_reach(args):
    mesh = load_mesh(args.mesh)
    field = curvature_field(mesh)
    _emit({"reach": estimate_reach(mesh, field, args.tolerance)}, args.out)
    return EXIT_OK


def _functional_from_args(args):
    if args.spec is not None:
        return FunctionalSpec.from_dict(load_spec(args.spec))
    if args.kind is None:
        raise ParseError("eval needs --kind or --spec")
    params = {}
    for item in args.param or []:
        key, sep, val = item.partition("=")
        if not sep:
            raise ParseError(f"--param expects key=value, got {item!r}")
        try:
            params[key] = float(val)
        except ValueError:
            raise ParseError(f"--param {key} is not a number") from None
    return FunctionalSpec(args.kind, params)


def cmd_eval(args):
    mesh = load_mesh(args.mesh)
    spec = _functional_from_args(args)
    field = curvature_field(mesh, epsilon_hint=args.epsilon_hint) if (spec.needs_curvature or args.field) else None
    _emit({"kind": spec.kind, "value": evaluate(mesh, field, spec)}, args.out)
    if args.field:
        rows = {
            "vertex": np.arange(mesh.n_vertices),
            "H": field.H,
            "K": field.K,
            "kappa1": field.kappa1,
            "kappa2": field.kappa2,
            "area": field.lumped_area,
        }
        if args.field.lower().endswith(".csv"):
            try:
                with open(args.field, "w") as fh:
                    fh.write(",".join(rows) + "\n")
                    for i in range(mesh.n_vertices):
                        fh.write(str(i) + "," + ",".join(format(float(rows[k][i]), ".17g") for k in list(rows)[1:]) + "\n")
            except OSError as exc:
                raise ParseError(f"cannot write {args.field}: {exc}") from None
        else:
            _emit({k: v for k, v in rows.items()}, args.field)
    return EXIT_OK


def cmd_minimize(args):
    mesh = load_mesh(args.mesh)
    objective = FunctionalSpec.from_dict(load_spec(args.objective))
    constraints = ConstraintSpec.from_list(_read_json(args.constraints)) if args.constraints else ConstraintSpec()
    config = OptimizerConfig.from_dict(_read_json(args.config)) if args.config else OptimizerConfig()
    out, trace = minimize(mesh, objective, constraints, config)
    save_mesh(out, args.out)
    if args.trace:
        _emit(trace.to_list(), args.trace)
    last = trace.records[-1] if trace.records else None
    _emit({"reason": trace.reason, "iterations": len(trace.records), "energy": None if last is None else last.energy})
    return EXIT_OK


def cmd_converge(args):
    spec = SequenceSpec.from_dict(_read_json(args.spec))
    report = run_sequence(spec)
    _emit(report.to_dict(), args.out)
    if args.out:
        root, _ = os.path.splitext(args.out)
        try:
            with open(root + ".csv", "w") as fh:
                fh.write(report.to_csv())
        except OSError as exc:
            raise ParseError(f"cannot write {root}.csv: {exc}") from None
    return EXIT_OK


def cmd_radii(args):
    tables = [radii_table(e).to_dict() for e in args.epsilon]
    _emit(tables[0] if len(tables) == 1 else tables, args.out)
    return EXIT_OK


# ----------------------------------------------------------------- parser
def _positive(text):
    try:
        x = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return x


def _nonneg_int(text):
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative: {text!r}")
    return n


def build_parser():
    p = argparse.ArgumentParser(prog="ballshape", description="Surfaces under the uniform epsilon-ball condition.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")
    common.add_argument("--threads", type=int, default=None, help="cap on worker threads (default: $BALLSHAPE_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write a primitive mesh")
    g.add_argument("shape", choices=["icosphere", "torus", "ellipsoid", "perturbed"])
    g.add_argument("--out", required=True, help="output .off or .obj path")
    g.add_argument("--radius", type=_positive, default=1.0, help="sphere radius (icosphere, perturbed)")
    g.add_argument("--subdiv", type=_nonneg_int, default=4, help="subdivision level")
    g.add_argument("--R", type=_positive, default=2.0, help="torus major radius")
    g.add_argument("--r", type=_positive, default=0.5, help="torus minor radius")
    g.add_argument("--nu", type=int, default=128, help="torus segments around the axis")
    g.add_argument("--nv", type=int, default=64, help="torus segments around the tube")
    g.add_argument("--a", type=_positive, default=1.5, help="ellipsoid semi-axis x")
    g.add_argument("--b", type=_positive, default=1.0, help="ellipsoid semi-axis y")
    g.add_argument("--c", type=_positive, default=0.8, help="ellipsoid semi-axis z")
    g.add_argument("--amp", type=float, default=0.1, help="perturbation amplitude in [0, 1)")
    g.add_argument("--mode", type=_nonneg_int, default=2, help="Legendre mode of the perturbation")
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("certify", parents=[common], help="test the epsilon-ball condition")
    c.add_argument("--mesh", required=True)
    c.add_argument("--epsilon", type=_positive, required=True)
    c.add_argument("--tolerance", type=float, default=None, help="accepted negative clearance (default 1e-2 x mean edge)")
    c.add_argument("--out", default=None, help="certificate JSON path (default stdout)")
    c.set_defaults(func=cmd_certify)

    r = sub.add_parser("reach", parents=[common], help="largest certified epsilon")
    r.add_argument("--mesh", required=True)
    r.add_argument("--tolerance", type=float, default=None)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_reach)

    e = sub.add_parser("eval", parents=[common], help="evaluate a functional")
    e.add_argument("--mesh", required=True)
    e.add_argument("--kind", default=None, help="functional kind, e.g. willmore, area, helfrich")
    e.add_argument("--param", action="append", help="functional parameter key=value (repeatable)")
    e.add_argument("--spec", default=None, help="FunctionalSpec JSON file (instead of --kind)")
    e.add_argument("--epsilon-hint", type=_positive, default=None, help="clamp chart radii to the chart radius of this epsilon")
    e.add_argument("--field", default=None, help="also dump the curvature field (.json or .csv)")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("minimize", parents=[common], help="constrained shape minimization")
    m.add_argument("--mesh", required=True)
    m.add_argument("--objective", required=True, help="FunctionalSpec JSON")
    m.add_argument("--constraints", default=None, help="JSON list of constraint records")
    m.add_argument("--config", default=None, help="OptimizerConfig JSON")
    m.add_argument("--out", required=True, help="final mesh path")
    m.add_argument("--trace", default=None, help="trace JSON path")
    m.set_defaults(func=cmd_minimize)

    v = sub.add_parser("converge", parents=[common], help="distances and functional gaps along a sequence")
    v.add_argument("--spec", required=True, help="SequenceSpec JSON")
    v.add_argument("--out", default=None, help="report JSON path; a CSV mirror is written next to it")
    v.set_defaults(func=cmd_converge)

    k = sub.add_parser("radii", parents=[common], help="epsilon-dependent constants")
    k.add_argument("--epsilon", type=_positive, action="append", required=True, help="repeatable")
    k.add_argument("--out", default=None)
    k.set_defaults(func=cmd_radii)
    return p


def _threads(args):
    if args.threads is not None:
        return args.threads
    env = os.environ.get("BALLSHAPE_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ParseError(f"BALLSHAPE_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_IO
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.quiet:
        logging.getLogger().setLevel(logging.ERROR)
    try:
        threads = _threads(args)
        if threads is not None and threads < 1:
            raise ParseError("--threads must be at least 1")
        with threadpool_limits(limits=threads):
            return args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except BallShapeError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
