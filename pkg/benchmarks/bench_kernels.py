"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py [--n 4000] [--d 64] [--k 15] [--repeat 3]

Both variants are imported directly from ``graphret.kernels``, so the
``GRAPHRET_DISABLE_NUMBA`` switch does not matter here.
"""
import argparse
import time

import numpy as np

from graphret import graph, kernels


def best_of(fn, repeat):
    fn()  # warm-up (numba compile / cache load)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, d, k):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(n, d))
    skip = np.arange(n, dtype=np.int64)
    g = graph.add_self_loops(graph.symmetrize(graph.knn_graph(X, k)))
    ro, ci = g.row_offsets, g.col_indices
    H = rng.normal(size=(n, 64))
    s = rng.normal(size=ci.shape[0])
    alpha = kernels.segment_softmax_np(ro, s)
    forest = graph.KDForest(X, seed=0)
    checks = graph.default_checks(n, k, d)
    tree_args = (*forest.nodes, forest.perm, checks)
    idx, dist = forest.query(X, k, checks, skip)
    return {
        "knn_exact": (lambda f: f(X, X, k, skip)),
        "kdforest_search": (lambda f: f(X, X, k, skip, *tree_args)),
        "refine_knn": (lambda f: f(X, idx, dist)),
        "spmm": (lambda f: f(ro, ci, g.values, H)),
        "spmm_t": (lambda f: f(ro, ci, g.values, H, n)),
        "segment_softmax": (lambda f: f(ro, s)),
        "segment_softmax_grad": (lambda f: f(ro, alpha, s)),
        "edge_dot": (lambda f: f(ro, ci, H, H)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=4000)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--k", type=int, default=15)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"n={args.n} d={args.d} k={args.k}, best of {args.repeat}")
    print(f"{'kernel':<22}{'numba s':>10}{'numpy s':>10}{'speedup':>9}")
    for name, call in cases(args.n, args.d, args.k).items():
        t_nb = best_of(lambda: call(getattr(kernels, name + "_nb")), args.repeat)
        t_np = best_of(lambda: call(getattr(kernels, name + "_np")), args.repeat)
        print(f"{name:<22}{t_nb:>10.4f}{t_np:>10.4f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
