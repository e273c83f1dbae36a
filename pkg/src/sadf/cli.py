"""Command-line front end.

Subcommands: build, resolve, query, bench, export. Manifests are printed as
JSON on stdout, logs go to stderr, and every error class exits with its own
code (see ``sadf.errors.EXIT_CODES``).
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time

import numpy as np

from . import kernels
from .errors import ParseError, SadfError
from .field import (
    STATUS_NAMES,
    Field,
    build,
    nearby_path,
    parse_sigma_spec,
    rmse_against,
    sample_exterior,
    semantic_state_from_config,
    time_queries,
    time_resolves,
)
from .mesh import BUILTIN_SHAPES, builtin_surface, load_surface, mesh_stats
from .persist import export_grid, load_bundle, save_bundle

log = logging.getLogger("sadf")

MANIFEST_KEYS = ("command", "inputs", "parameters", "timings", "mesh_stats", "rmse", "outputs")


def _manifest(command, **parts) -> dict:
    m = {k: None for k in MANIFEST_KEYS}
    m["command"] = command
    m.update(parts)
    return m


def _stats(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std()), "median": float(np.median(v)),
            "min": float(v.min()), "max": float(v.max()), "n": int(v.size)}


def _sigma_config(args) -> dict:
    if getattr(args, "sigma_config", None):
        return parse_sigma_spec(args.sigma_config)
    return parse_sigma_spec(args.sigma or "const:0")


def _surface(args):
    if args.surface:
        return load_surface(args.surface)
    return builtin_surface(args.shape, args.lx, args.refine)


def _build_field(args) -> tuple[Field, dict, dict]:
    surface = _surface(args)
    config = _sigma_config(args)
    state = semantic_state_from_config(config, surface)
    field, timings = build(surface, l_x=args.lx, mesh_path=args.mesh, mesh_format=args.mesh_format,
                           origin=args.origin, state=state)
    return field, timings, config


def cmd_build(args) -> dict:
    field, timings, config = _build_field(args)
    size = save_bundle(field, args.out) if args.out else None
    return _manifest(
        "build",
        inputs={"surface": args.surface, "shape": None if args.surface else args.shape,
                "mesh": args.mesh},
        parameters={"l_x": args.lx, "origin": field.frame.origin.tolist(),
                    "scale": field.frame.scale, "sigma": config},
        timings=timings,
        mesh_stats=mesh_stats(field.domain),
        outputs={"bundle": args.out, "bundle_bytes": size,
                 "residual_norm": field.solution.residual_norm,
                 "max_principle_violation": field.solution.max_principle_violation},
    )


def cmd_resolve(args) -> dict:
    field = load_bundle(args.bundle)
    t0 = time.perf_counter()
    field = field.refactorize()
    t_refactor = time.perf_counter() - t0
    config = _sigma_config(args)
    state = semantic_state_from_config(config, field.recover_surface())
    new = field.update(state)
    size = save_bundle(new, args.out) if args.out else None
    return _manifest(
        "resolve",
        inputs={"bundle": args.bundle},
        parameters={"sigma": config},
        timings={"t_build": t_refactor - new.handle.t_decomp, "t_decomp": new.handle.t_decomp,
                 "t_solve": new.solution.t_solve},
        mesh_stats=mesh_stats(new.domain),
        outputs={"bundle": args.out, "bundle_bytes": size,
                 "residual_norm": new.solution.residual_norm,
                 "boundary_h_minus_sigma": float(np.abs(new.boundary_h() - state.sigma).max())},
    )


def _parse_point(line: str):
    parts = line.split()
    if len(parts) != 3:
        raise ValueError(line)
    return [float(p) for p in parts]


def cmd_query(args) -> None:
    field = load_bundle(args.bundle)
    stream = open(args.points) if args.points and args.points != "-" else sys.stdin
    out = sys.stdout
    hint = -1
    n_bad = 0
    with stream:
        for lineno, line in enumerate(stream, 1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                p = _parse_point(line)
            except ValueError:
                n_bad += 1
                log.warning("line %d: expected 'x y z', got %r", lineno, line.rstrip())
                cols = ["nan"] + (["nan"] * 3 if args.gradients else []) + ["-1", "ParseError"]
                out.write("\t".join(cols + (["0"] if args.steps else [])) + "\n")
                continue
            res = field.query_many(np.array([p]), hint=hint, gradient=args.gradient_mode)
            hint = res.hint
            s = int(res.status[0])
            cols = [repr(float(res.h[0]))]
            if args.gradients:
                cols += [repr(float(g)) for g in res.grad[0]]
            cols += [str(int(res.tet[0])), STATUS_NAMES[s]]
            if args.steps:
                cols.append(str(int(res.steps[0])))
            out.write("\t".join(cols) + "\n")
    if n_bad:
        log.warning("%d unparseable point line(s)", n_bad)


def cmd_bench(args) -> dict:
    if args.bundle:
        field = load_bundle(args.bundle)
        t0 = time.perf_counter()
        field = field.refactorize()
        timings = {"t_refactor": time.perf_counter() - t0, "t_decomp": field.handle.t_decomp}
        config = {"mode": "table"}
    else:
        field, timings, config = _build_field(args)
    solves = time_resolves(field, args.repetitions, seed=args.seed)
    path = nearby_path(field, args.queries, seed=args.seed)
    hinted = time_queries(field, path, use_hint=True)
    cold = time_queries(field, path, use_hint=False)
    timings.update({
        "t_solve": _stats(solves),
        "t_query_hinted_ns": _stats(hinted.time_ns),
        "t_query_unhinted_ns": _stats(cold.time_ns),
        "walk_steps_hinted": _stats(hinted.steps),
        "walk_steps_unhinted": _stats(cold.steps),
    })

    rmse = None
    if args.sweep:
        rmse = _sweep(args)
    return _manifest(
        "bench",
        inputs={"bundle": args.bundle, "shape": None if args.bundle or args.surface else args.shape,
                "surface": args.surface},
        parameters={"l_x": args.lx, "repetitions": args.repetitions, "queries": args.queries,
                    "seed": args.seed, "sigma": config, "backend": kernels.BACKEND},
        timings=timings,
        mesh_stats=mesh_stats(field.domain),
        rmse=rmse,
    )


def _sweep(args) -> dict:
    levels = sorted(args.sweep, reverse=True)
    ref_lx = args.reference_lx or levels[-1] / 2
    ns = argparse.Namespace(**vars(args))
    ns.refine = None
    ns.lx = ref_lx
    ref, _, _ = _build_field(ns)
    ref_stats = mesh_stats(ref.domain)
    pts = sample_exterior(ref, args.rmse_points, seed=args.seed)
    ref_vals = ref.query_many(pts)
    del ref  # the reference factorization dominates memory
    rows = []
    for lx in levels:
        ns.lx = lx
        field, _, _ = _build_field(ns)
        err, n = rmse_against(field, ref_vals, pts)
        rows.append({"l_x": lx, "rmse": err, "n_points": n, **mesh_stats(field.domain)})
    values = [r["rmse"] for r in rows]
    return {"reference_l_x": ref_lx, "reference": ref_stats, "levels": rows,
            "strictly_decreasing": all(a > b for a, b in zip(values, values[1:]))}


def cmd_export(args) -> dict:
    field = load_bundle(args.bundle)
    lo, hi = args.bbox[:3], args.bbox[3:]
    n = export_grid(field, (lo, hi), args.resolution, args.out)
    return _manifest("export", inputs={"bundle": args.bundle},
                     parameters={"bbox": args.bbox, "resolution": args.resolution},
                     outputs={"vtk": args.out, "samples": n})


def _add_build_source(p, required_out=False):
    src = p.add_mutually_exclusive_group()
    src.add_argument("--shape", choices=BUILTIN_SHAPES, default="sphere",
                     help="built-in fixture (default: sphere)")
    src.add_argument("--surface", help="OBJ or OFF surface file")
    p.add_argument("--refine", type=int, default=None,
                   help="override the built-in fixture's surface resolution")
    p.add_argument("--mesh", help="external tet mesh of the inverted domain (.msh or .node)")
    p.add_argument("--mesh-format", choices=("gmsh", "tetgen"), default=None)
    p.add_argument("--lx", type=float, default=0.1, help="exterior element length (normalized)")
    p.add_argument("--origin", type=float, nargs=3, metavar=("X", "Y", "Z"),
                   help="inversion origin (default: surface centroid)")
    sig = p.add_mutually_exclusive_group()
    sig.add_argument("--sigma", help="semantic values, e.g. const:0.5")
    sig.add_argument("--sigma-config", help="JSON semantic configuration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sadf", description="Semantics-aware distance fields")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="mesh, assemble, factorize, solve and save a field")
    _add_build_source(p)
    p.add_argument("--out", help="output bundle path")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("resolve", help="re-solve a bundle for new semantic values")
    p.add_argument("bundle")
    sig = p.add_mutually_exclusive_group(required=True)
    sig.add_argument("--sigma")
    sig.add_argument("--sigma-config")
    p.add_argument("--out", help="output bundle path")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("query", help="evaluate h at points (one 'x y z' per line)")
    p.add_argument("bundle")
    p.add_argument("--points", help="points file (default: stdin)")
    p.add_argument("--gradients", action="store_true", help="emit gx gy gz columns")
    p.add_argument("--gradient-mode", choices=("vertex", "p1"), default="vertex")
    p.add_argument("--steps", action="store_true", help="append the walk length column")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("bench", help="time re-solves and queries; optional RMSE sweep")
    p.add_argument("--bundle", help="benchmark an existing bundle instead of building")
    _add_build_source(p)
    p.add_argument("--repetitions", type=int, default=100)
    p.add_argument("--queries", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sweep", type=float, nargs="+", metavar="LX",
                   help="l_x levels for the RMSE column")
    p.add_argument("--reference-lx", type=float, default=None,
                   help="l_x of the reference field (default: half the finest level)")
    p.add_argument("--rmse-points", type=int, default=10000)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export", help="sample h on a grid as legacy VTK")
    p.add_argument("bundle")
    p.add_argument("--bbox", type=float, nargs=6, default=[-3, -3, -3, 3, 3, 3],
                   metavar=("XMIN", "YMIN", "ZMIN", "XMAX", "YMAX", "ZMAX"))
    p.add_argument("--resolution", type=int, nargs=3, default=[64, 64, 64],
                   metavar=("NX", "NY", "NZ"))
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * args.verbose, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = args.func(args)
    except SadfError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return exc.exit_code
    except FileNotFoundError as exc:
        log.error("ParseError: %s", exc)
        return ParseError.exit_code
    if manifest is not None:
        json.dump(_jsonable(manifest), sys.stdout, indent=2)
        sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
