"""Compare the compiled and pure-Python kernel backends.

Times three kernels on a regular grid with AMMD ordering: the grouped
likelihood (block_solve), building the sparse factor (block_rows) and a
triangular solve (forward_solve).  Prints one CSV row per kernel and
backend, plus the speedup, and checks that both backends agree.

    python3 benchmarks/bench_backends.py --grid 100x100 --neighbors 30
"""

import argparse
import csv
import sys
import time

import numpy as np

from vecchia import _backend
from vecchia.core import LikelihoodPlan, build_gamma_tilde, vecchia_loglik
from vecchia.covariance import CovarianceModel
from vecchia.grouping import group_blocks
from vecchia.locations import parse_grid
from vecchia.neighbors import nn_ordered_fast
from vecchia.ordering import order_points


def best_of(fun, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fun()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--grid", default="60x60")
    ap.add_argument("--neighbors", type=int, default=30)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args(argv)

    locs = parse_grid(args.grid)
    model = CovarianceModel(variance=1.0, range=0.1, smoothness=0.5, nugget=0.01)
    perm = order_points(locs, "ammd")
    sets = nn_ordered_fast(locs, perm, args.neighbors)
    part = group_blocks(sets)
    plan = LikelihoodPlan.build(perm, part)
    y = np.random.default_rng(0).standard_normal(locs.n)
    B = np.ascontiguousarray(np.random.default_rng(1).standard_normal((locs.n, 4)))

    kernels = {
        "block_solve": lambda: vecchia_loglik(model, locs, plan, y, threads=args.threads).loglik,
        "block_rows": lambda: build_gamma_tilde(model, locs, perm, part, threads=args.threads),
    }
    results = {}
    for backend in _backend.available():
        with _backend.use_backend(backend):
            G = build_gamma_tilde(model, locs, perm, part, threads=args.threads)
            for kname, fun in kernels.items():
                results[kname, backend] = best_of(fun, args.repeat)
            results["forward_solve", backend] = best_of(lambda: G.solve(B), args.repeat)

    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["kernel", "backend", "n", "m", "seconds", "speedup"])
    for kname in ("block_solve", "block_rows", "forward_solve"):
        base = results[kname, "python"][0]
        for backend in _backend.available():
            secs = results[kname, backend][0]
            w.writerow([kname, backend, locs.n, args.neighbors, f"{secs:.4f}", f"{base / secs:.2f}"])

    if "compiled" in _backend.available():
        ll_c, ll_p = results["block_solve", "compiled"][1], results["block_solve", "python"][1]
        assert abs(ll_c - ll_p) <= 1e-8 * abs(ll_p), (ll_c, ll_p)
        Gc, Gp = results["block_rows", "compiled"][1], results["block_rows", "python"][1]
        assert np.allclose(Gc.data, Gp.data, rtol=1e-10, atol=1e-12)
        Xc, Xp = results["forward_solve", "compiled"][1], results["forward_solve", "python"][1]
        assert np.allclose(Xc, Xp, rtol=1e-10, atol=1e-10)
    else:
        print("compiled backend not built; python only", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
