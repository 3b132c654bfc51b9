"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--scale 1.0]
"""

import argparse
import math
import timeit

import numpy as np

from graph_unlearn import kernels
from graph_unlearn.gnn import normalized_adjacency
from graph_unlearn.graph import synth_sbm


def cases(scale, seed):
    rng = np.random.default_rng(seed)
    n = int(3000 * scale)
    g = synth_sbm(n, 4, 8.0 / n, 1.0 / n, 64, seed=seed)
    adj = normalized_adjacency(g).matrix
    x = rng.standard_normal((n, 64))
    pts, k = int(4000 * scale), 16
    dist = rng.random((pts, k))
    cap = math.ceil(pts / k)
    pos, neg = rng.random(int(20000 * scale)), rng.random(int(20000 * scale))
    return {
        f"spmm n={n} nnz={adj.nnz} d=64": lambda impl: kernels.spmm(adj, x, impl=impl),
        f"capacity_assign {pts}x{k}": lambda impl: kernels.capacity_assign(dist, cap, impl=impl),
        f"pairwise_auc {len(pos)}x{len(neg)}": lambda impl: kernels.pairwise_auc(pos, neg, impl=impl),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    impls = kernels.backends()
    print(f"active backend: {kernels.BACKEND}; available: {', '.join(sorted(impls))}")
    if "cython" not in impls:
        print("compiled extension not built; only the fallback is timed")
    print(f"{'kernel':40s}" + "".join(f"{name:>12s}" for name in sorted(impls)) + f"{'speedup':>10s}")
    for label, fn in cases(args.scale, args.seed).items():
        best = {}
        for name, impl in sorted(impls.items()):
            fn(impl)  # warm up
            best[name] = min(timeit.repeat(lambda: fn(impl), number=1, repeat=args.repeat))
        speed = f"{best['python'] / best['cython']:9.1f}x" if "cython" in best else f"{'-':>10s}"
        print(f"{label:40s}" + "".join(f"{best[n] * 1e3:10.2f}ms" for n in sorted(best)) + speed)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
