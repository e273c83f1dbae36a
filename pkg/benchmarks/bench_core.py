"""Compare the compiled and pure-Python location/query kernels on one field.

    python3 benchmarks/bench_core.py --refine 3 --lx 0.1 --queries 2000
"""
import argparse
import json
import time

import numpy as np

from sadf import kernels
from sadf.field import build, nearby_path, sample_exterior
from sadf.mesh import builtin_surface


def time_call(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(field, core, path, scattered, repeat):
    d = field.domain
    B, nbr, verts, tets, star = (d.barycentric_table, d.neighbors, d.vertices, d.tets,
                                 d.star_shaped)
    q = field.frame.normalize(scattered)
    ys = q / (q * q).sum(axis=1)[:, None]

    def locate_all():
        for y in ys:
            core.locate(B, nbr, verts, tets, star, float(y[0]), float(y[1]), float(y[2]),
                        d.default_start, 1e-12)

    row = {
        "query_path_hinted_s": time_call(lambda: field.query_many(path, backend=core), repeat),
        "query_path_unhinted_s": time_call(
            lambda: field.query_many(path, warm=False, use_hint=False, backend=core), repeat),
        "query_scattered_s": time_call(lambda: field.query_many(scattered, backend=core), repeat),
        "locate_cold_s": time_call(locate_all, repeat),
    }
    timed = field.query_many(path, timed=True, backend=core)
    row["query_hinted_median_ns"] = float(np.median(timed.time_ns))
    return row


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--shape", choices=("sphere", "cube", "box"), default="sphere")
    ap.add_argument("--refine", type=int, default=None)
    ap.add_argument("--lx", type=float, default=0.1)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    field, timings = build(builtin_surface(args.shape, args.lx, args.refine), l_x=args.lx)
    path = nearby_path(field, args.queries, seed=args.seed)
    scattered = sample_exterior(field, args.queries, seed=args.seed)

    backends = {"python": kernels.python_core}
    if kernels.BACKEND == "cython":
        backends["cython"] = kernels.core
    rows = {name: bench_backend(field, core, path, scattered, args.repeat)
            for name, core in backends.items()}
    if "cython" in rows:
        rows["speedup"] = {k: rows["python"][k] / rows["cython"][k] for k in rows["cython"]}
    report = {"shape": args.shape, "l_x": args.lx, "n_verts": field.domain.n_verts,
              "n_tets": field.domain.n_tets, "queries": args.queries, "build": timings,
              "backends": rows}
    print(json.dumps(report, indent=2))


if __name__ == "__main__":
    main()
