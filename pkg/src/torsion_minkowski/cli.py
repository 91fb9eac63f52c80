"""Command-line entry point ``tm``.

Exit status: 0 success, 1 input or parse error, 2 failed precondition,
3 non-convergence, 4 verification checks failed.  Errors are written to
standard error as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from .anisotropy import norm_from_config
from .checks import run_suite
from .errors import PreconditionError, TorsionError
from .geometry import ConvexPolygon
from .measures import lq_torsional_measure, torsion_constant, torsional_rigidity
from .mesh import triangulate
from .minkowski import DiscreteMeasure, SolverConfig, solve_minkowski
from .pde import check_p, default_target_h, solve_torsion

EXIT_OK, EXIT_PARSE, EXIT_PRECONDITION, EXIT_NONCONVERGENCE, EXIT_CHECKS = 0, 1, 2, 3, 4

EPILOG = """exit status:
  0  success
  1  unreadable input, malformed JSON or bad arguments
  2  failed precondition (p <= 1, excluded q, concentrated measure, ...)
  3  solver did not converge
  4  verify: at least one check failed

TM_THREADS caps the number of BLAS/OpenMP threads."""


class InputError(Exception):
    """Raised for unreadable or malformed input; maps to exit status 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(message)


def _fmt(x) -> str:
    if isinstance(x, bool) or x is None:
        return json.dumps(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return "null"
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_fmt(v)}" for k, v in x.items()) + "}"
    if isinstance(x, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    raise TypeError(f"cannot serialise {type(x).__name__}")


def dumps(obj) -> str:
    """JSON with every float written to 17 significant digits."""
    return _fmt(obj) + "\n"


def _read_json(path: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
        return json.loads(text)
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise InputError(f"cannot read JSON from {path}: {exc}") from exc


def _load_norm(spec: str | None):
    if spec is None:
        return norm_from_config(None)
    s = spec.strip()
    if s.startswith("{"):
        try:
            cfg = json.loads(s)
        except json.JSONDecodeError as exc:
            raise InputError(f"bad --norm JSON: {exc}") from exc
    elif Path(s).is_file():
        cfg = _read_json(s)
    else:
        cfg = s
    return norm_from_config(cfg)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _polygon(args) -> ConvexPolygon:
    data = _read_json(args.polygon)
    if not isinstance(data, dict):
        raise InputError("polygon JSON must be an object")
    return ConvexPolygon.from_json(data)


def _mesh_and_solve(K, F, p, args):
    h = args.mesh_h if args.mesh_h is not None else default_target_h(K)
    if not h > 0:
        raise PreconditionError("--mesh-h must be positive")
    return solve_torsion(K, F, p, triangulate(K, h), tol=args.tol)


def cmd_solve_torsion(args) -> int:
    p = check_p(args.p)
    K = _polygon(args)
    F = _load_norm(args.norm)
    sol = _mesh_and_solve(K, F, p, args)
    rep = torsional_rigidity(K, F, p, sol)
    doc = rep.to_json() | {"norm": F.to_json(), "nodes": sol.mesh.n_nodes, "triangles": len(sol.mesh.triangles),
                           "newton_iterations": sol.iterations}
    text = dumps(doc)
    field = None
    if args.field:
        rows = [(float(x), float(y), float(u)) for (x, y), u in zip(sol.mesh.nodes, sol.nodal_values)]
        field = _csv_text(["x", "y", "u"], rows)
    _emit(text, args.out)
    if field is not None:
        Path(args.field).write_text(field)
    return EXIT_OK


def cmd_compute_measure(args) -> int:
    p = check_p(args.p)
    if args.q == 0:
        raise PreconditionError("q must be nonzero")
    K = _polygon(args)
    F = _load_norm(args.norm)
    sol = _mesh_and_solve(K, F, p, args)
    meas = lq_torsional_measure(K, F, p, args.q, sol, prefactor=args.prefactor)
    rep = torsional_rigidity(K, F, p, sol)
    doc = meas.to_json(rep) | {"constant": torsion_constant(p)}
    _emit(dumps(doc), args.out)
    return EXIT_OK


def cmd_solve_minkowski(args) -> int:
    p = check_p(args.p)
    q = args.q
    if q is None:
        raise InputError("--q is required")
    if q <= 0 or q == 1:
        raise PreconditionError("q must satisfy q > 1 or 0 < q < 1 (q = 1 and q <= 0 are not solver regimes)", q=q)
    data = _read_json(args.measure)
    if not isinstance(data, dict):
        raise InputError("measure JSON must be an object")
    mu = DiscreteMeasure.from_json(data)
    F = _load_norm(args.norm)
    overrides = {} if args.tol is None else {"tol": args.tol}
    cfg = SolverConfig(target_h=args.mesh_h, **overrides)
    outcome = solve_minkowski(mu, F, p, q, cfg)
    trace = _csv_text(["iteration", "objective"], list(enumerate(map(float, outcome.objective_trace))))
    _emit(dumps(outcome.to_json()), args.out)
    if args.trace:
        Path(args.trace).write_text(trace)
    return EXIT_OK


def cmd_verify(args) -> int:
    F = _load_norm(args.norm)
    rows = run_suite(F, quick=args.quick, seed=args.seed)
    header = ["check", "fixture", "p", "q", "value", "reference", "tolerance", "constant", "passed"]
    table = _csv_text(header, [[r.row()[k] for k in header] for r in rows])
    _emit(table, args.out)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_CHECKS


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="tm",
        description="Anisotropic p-torsion, its L_q measures and the discrete L_q Minkowski problem.",
        epilog=EPILOG,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, q_default):
        sp.add_argument("--norm", help="euclidean | ellipse | smoothed-ls, or norm JSON (inline or file)")
        sp.add_argument("--p", type=float, default=2.0)
        sp.add_argument("--q", type=float, default=q_default)
        sp.add_argument("--mesh-h", type=float, default=None, help="mesh size (default: diameter/60)")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")

    st = sub.add_parser("solve-torsion", help="torsional rigidity by both formulas")
    st.add_argument("polygon", help='polygon JSON {"vertices": [[x, y], ...]}')
    common(st, 1.0)
    st.add_argument("--tol", type=float, default=1e-10, help="Newton residual tolerance")
    st.add_argument("--field", default=None, help="write nodal values as CSV here")
    st.set_defaults(func=cmd_solve_torsion)

    cm = sub.add_parser("compute-measure", help="per-facet S_p and S_pq")
    cm.add_argument("polygon")
    common(cm, 1.0)
    cm.add_argument("--tol", type=float, default=1e-10)
    cm.add_argument("--prefactor", action="store_true", help="multiply S_pq by (p-1)/(n(p-1)+p)")
    cm.set_defaults(func=cmd_compute_measure)

    sm = sub.add_parser("solve-minkowski", help="discrete L_q Minkowski problem")
    sm.add_argument("measure", help='measure JSON {"atoms": [{"direction": [x, y], "weight": a}, ...]}')
    common(sm, None)
    sm.add_argument("--tol", type=float, default=None, help="first-order residual tolerance (default 1e-3)")
    sm.add_argument("--trace", default=None, help="write the objective trace as CSV here")
    sm.set_defaults(func=cmd_solve_minkowski)

    vf = sub.add_parser("verify", help="run the invariant checks over the fixtures")
    vf.add_argument("--norm")
    vf.add_argument("--quick", action="store_true", help="small subset (square, hexagon; p = 2)")
    vf.add_argument("--seed", type=int, default=0, help="seed for the random fixture and translations")
    vf.add_argument("--out", default=None)
    vf.set_defaults(func=cmd_verify)
    return parser


def _fail(code: int, payload: dict) -> int:
    sys.stderr.write(dumps(payload))
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except InputError as exc:
        return _fail(EXIT_PARSE, {"code": "ParseError", "message": str(exc), "details": {}})
    except TorsionError as exc:
        return _fail(exc.exit_code, exc.to_dict())


if __name__ == "__main__":
    sys.exit(main())
