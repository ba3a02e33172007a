"""Command-line driver: stability tables, transient runs, reference archives,
convergence ladders, snapshots and mesh export.

Every command writes a ``manifest.json`` next to its outputs. Exit codes are
0 on success, 2 for a configuration error, 3 when a solver fails and 4 when a
transient run blows up (the partial history is still written).
"""

import argparse
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from . import report as rep
from .assembly import DEFAULT_DEGREE, assemble_operators, project_initial
from .mesh import build_uniform_mesh, cells_per_side, model_initial, model_velocity
from .schemes import (SCHEMES, TAU_REF, SchemeConfig, SchemeConfigError,
                      convergence_study, reference_solution, run_transient,
                      sample_grid)
from .sparse import EigenSolverError, SingularMatrixError, write_coo
from .stability import EIG_TOL, oracle_rows, stability_report

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_BLOWUP = 4

ORACLE_MAX_NODES = 2000


class ConfigError(Exception):
    pass


def _floats(text):
    text = (text or "").strip()
    if not text:
        return []
    try:
        return [float(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}") from exc


def read_config(path):
    """Parse a ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _common(p):
    p.add_argument("--config", help="key=value file; explicit flags take precedence")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--quad-degree", type=int, default=DEFAULT_DEGREE,
                   help="quadrature degree for K and G (default: %(default)s)")
    p.add_argument("--tol", type=float, default=EIG_TOL,
                   help="eigensolver tolerance (default: %(default)s)")
    p.add_argument("--diagonal", choices=("up", "down"), default="up")


def _scheme_args(p, tau_required=True):
    p.add_argument("--scheme", choices=SCHEMES, default="crank_nicolson")
    p.add_argument("--h", type=float, default=0.05)
    if tau_required:
        p.add_argument("--tau", type=float, default=1e-2)
    p.add_argument("--T", type=float, default=1.0)
    p.add_argument("--beta", type=float)
    p.add_argument("--mu", type=float)
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--mass", choices=("consistent", "lumped"))
    p.add_argument("--no-bound-check", action="store_true",
                   help="skip the step-size limits of pade4 and implicit Lax-Wendroff")


def build_parser():
    parser = argparse.ArgumentParser(prog="skewadvect", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = sub.choices

    p = sub.add_parser("tables", help="norm of A and Lax-Wendroff step limits per h")
    _common(p)
    p.add_argument("--h", type=_floats, default=_floats("0.02,0.01,0.005"),
                   help="comma-separated mesh sizes (empty for header-only tables)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes, one h per job")
    p.add_argument("--oracle-max-nodes", type=int, default=ORACLE_MAX_NODES,
                   help="cross-check meshes up to this many nodes against the dense oracle")

    p = sub.add_parser("run", help="transient run with norm history and snapshots")
    _common(p)
    _scheme_args(p)
    p.add_argument("--snapshots", type=_floats,
                   help="snapshot times (default: the whole numbers in [0, T])")
    p.add_argument("--reference", help="reference archive directory for the epsilon column")

    p = sub.add_parser("reference", help="archive a fine-step reference solution")
    _common(p)
    _scheme_args(p, tau_required=False)
    p.add_argument("--tau-ref", type=float, default=TAU_REF)
    p.add_argument("--samples", type=int, default=101, help="uniform sample count on [0, T]")

    p = sub.add_parser("convergence", help="relative error curves for a ladder of steps")
    _common(p)
    _scheme_args(p, tau_required=False)
    p.add_argument("--taus", type=_floats, required=True, help="comma-separated steps")
    p.add_argument("--reference", help="existing reference archive (built when missing)")
    p.add_argument("--tau-ref", type=float, default=TAU_REF)
    p.add_argument("--samples", type=int, default=101)

    p = sub.add_parser("snapshot", help="nodal fields at chosen times")
    _common(p)
    _scheme_args(p)
    p.add_argument("--times", type=_floats, help="default: the whole numbers in [0, T]")

    p = sub.add_parser("mesh-export", help="write the mesh (and optionally the matrices)")
    _common(p)
    p.add_argument("--h", type=float, default=0.1)
    p.add_argument("--operators", action="store_true", help="also write M, K, G in COO form")
    return parser


def parse_args(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config(args.config)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        sub = parser.commands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = sorted(set(values) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------- helpers

def _operators(args, h):
    mesh = build_uniform_mesh(h, diagonal=args.diagonal)
    return assemble_operators(mesh, model_velocity(), args.quad_degree)


def _config(args, tau=None):
    return SchemeConfig(args.scheme, args.tau if tau is None else tau, args.T,
                        theta=args.theta, beta=args.beta, mu=args.mu, mass=args.mass)


def _integer_times(T):
    return [float(k) for k in range(int(np.floor(T + 1e-12)) + 1)]


def _params(args):
    return {k: v for k, v in sorted(vars(args).items()) if k != "config"}


def write_manifest(args, out, files, started, extra=None):
    manifest = {
        "command": args.command,
        "version": __version__,
        "params": _params(args),
        "h": getattr(args, "h", None),
        "quad_degree": args.quad_degree,
        "projection_quad_degree": 8,
        "tolerances": {"eigensolver": args.tol},
        "wall_time_s": time.perf_counter() - started,
        "files": sorted(os.path.relpath(f, out) for f in files),
    }
    manifest.update(extra or {})
    path = os.path.join(out, "manifest.json")
    with open(path, "w") as f:
        json.dump(manifest, f, indent=2)
    return path


def _table_job(payload):
    h, diagonal, degree, tol, oracle_max = payload
    mesh = build_uniform_mesh(h, diagonal=diagonal)
    ops = assemble_operators(mesh, model_velocity(), degree)
    report = stability_report(ops, tol=tol)
    rows = []
    if mesh.n_nodes <= oracle_max:
        rows = oracle_rows(report, ops)
    return report, rows


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------- commands

def cmd_tables(args, out):
    for h in args.h:
        cells_per_side(h)
    results = _map(_table_job, [(h, args.diagonal, args.quad_degree, args.tol,
                                 args.oracle_max_nodes) for h in args.h], args.jobs)
    reports = [r for r, _ in results]
    files = rep.write_tables(reports, out)
    oracle = [row for _, rows in results for row in rows]
    if oracle:
        files.append(rep.write_oracle_check(oracle, out))
    for r in reports:
        for name, msg in r.errors.items():
            print(f"h={r.h}: {name} failed: {msg}", file=sys.stderr)
    return files, {}, EXIT_OK


def _load_reference_if(args):
    if not getattr(args, "reference", None):
        return None
    try:
        return rep.load_reference(args.reference)
    except OSError as exc:
        raise ConfigError(f"cannot load reference archive: {exc}") from exc


def cmd_run(args, out):
    cfg = _config(args)
    reference = _load_reference_if(args)
    ops = _operators(args, args.h)
    z0 = project_initial(ops.mesh, model_initial, ops.M)
    times = args.snapshots if args.snapshots is not None else _integer_times(cfg.T)
    res = run_transient(cfg, ops, z0, sample_times=times, reference=reference,
                        check_bound=not args.no_bound_check)
    files = [rep.write_history(res.history, os.path.join(out, "history.csv"))]
    for t in sorted(res.snapshots):
        files.append(rep.write_snapshot(ops.mesh, res.snapshots[t],
                                        os.path.join(out, rep.snapshot_name(t))))
    extra = {"n_steps": cfg.n_steps, "blowup_level": res.blowup_level}
    if res.blowup_level is not None:
        print(f"blow-up detected at level {res.blowup_level}", file=sys.stderr)
        return files, extra, EXIT_BLOWUP
    return files, extra, EXIT_OK


def _build_reference(args, ops, z0, out_dir):
    cfg = _config(args, tau=args.tau_ref)
    snaps = reference_solution(cfg, ops, z0, sample_grid(cfg.T, args.samples), args.tau_ref)
    os.makedirs(out_dir, exist_ok=True)
    return snaps, rep.save_reference(snaps, out_dir)


def cmd_reference(args, out):
    ops = _operators(args, args.h)
    z0 = project_initial(ops.mesh, model_initial, ops.M)
    _, files = _build_reference(args, ops, z0, out)
    return files, {"tau_ref": args.tau_ref}, EXIT_OK


def cmd_convergence(args, out):
    if not args.taus:
        raise ConfigError("--taus must list at least one step")
    cfgs = [_config(args, tau=t) for t in args.taus]  # validate before any compute
    ops = _operators(args, args.h)
    z0 = project_initial(ops.mesh, model_initial, ops.M)
    files = []
    if args.reference and os.path.exists(os.path.join(args.reference, "reference_index.json")):
        reference = rep.load_reference(args.reference)
    else:
        ref_dir = args.reference or os.path.join(out, "reference")
        reference, files = _build_reference(args, ops, z0, ref_dir)
        files = [f for f in files if os.path.commonpath([os.path.abspath(f), os.path.abspath(out)])
                 == os.path.abspath(out)]
    result = convergence_study(cfgs[0], ops, z0, args.taus, reference,
                               times=sample_grid(args.T, args.samples))
    files.append(rep.write_convergence(result, os.path.join(out, "convergence.csv")))
    files.append(rep.write_orders(result, os.path.join(out, "orders.csv")))
    return files, {"orders": result.orders}, EXIT_OK


def cmd_snapshot(args, out):
    cfg = _config(args)
    ops = _operators(args, args.h)
    z0 = project_initial(ops.mesh, model_initial, ops.M)
    times = args.times if args.times is not None else _integer_times(cfg.T)
    res = run_transient(cfg, ops, z0, sample_times=times, record=False,
                        check_bound=not args.no_bound_check)
    files = [rep.write_snapshot(ops.mesh, res.snapshots[t], os.path.join(out, rep.snapshot_name(t)))
             for t in sorted(res.snapshots)]
    if res.blowup_level is not None:
        return files, {"blowup_level": res.blowup_level}, EXIT_BLOWUP
    return files, {}, EXIT_OK


def cmd_mesh_export(args, out):
    mesh = build_uniform_mesh(args.h, diagonal=args.diagonal)
    nodes, tris = os.path.join(out, "nodes.csv"), os.path.join(out, "triangles.csv")
    mesh.to_csv(nodes, tris)
    files = [nodes, tris]
    if args.operators:
        ops = assemble_operators(mesh, model_velocity(), args.quad_degree)
        for name, A in (("M", ops.M), ("K", ops.K), ("G", ops.G)):
            path = os.path.join(out, f"{name}.coo")
            write_coo(A, path)
            files.append(path)
        path = os.path.join(out, "M_lumped.csv")
        with open(path, "w") as f:
            f.write("index,value\n")
            for k, v in enumerate(ops.M_lumped):
                f.write(f"{k},{rep.fmt(v)}\n")
        files.append(path)
    return files, {"n_nodes": mesh.n_nodes}, EXIT_OK


COMMANDS = {
    "tables": cmd_tables,
    "run": cmd_run,
    "reference": cmd_reference,
    "convergence": cmd_convergence,
    "snapshot": cmd_snapshot,
    "mesh-export": cmd_mesh_export,
}


def main(argv=None):
    try:
        args = parse_args(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    started = time.perf_counter()
    out = args.out
    os.makedirs(out, exist_ok=True)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            files, extra, code = COMMANDS[args.command](args, out)
    except (ConfigError, SchemeConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EigenSolverError, SingularMatrixError, FloatingPointError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    write_manifest(args, out, files, started, extra)
    return code


if __name__ == "__main__":
    sys.exit(main())
