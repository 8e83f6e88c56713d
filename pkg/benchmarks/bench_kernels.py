#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

The two hot kernels are all-pairs BFS hop distances (root spreading needs
the full matrix) and region-growth candidate scoring (called once per
growth step). Run:

    python benchmarks/bench_kernels.py

Numba timings exclude the first (compilation) call. If numba is not
installed, only the numpy path is reported.
"""

import time

import numpy as np

from qpusched import _kernels
from qpusched.chip import generate_grid


def timeit(fn, *args, repeat=5):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_bfs():
    print("all-pairs BFS hop distances")
    print(f"{'grid':>10} {'qubits':>7} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    for side in (8, 16, 24, 32):
        chip = generate_grid(side, side)
        indptr, indices = chip.graph.csr
        n = chip.n_qubits
        t_np, ref = timeit(_kernels.bfs_all_pairs_numpy, indptr, indices, n)
        if _kernels.HAS_NUMBA:
            _kernels.bfs_all_pairs_numba(indptr, indices, n)  # compile
            t_nb, out = timeit(_kernels.bfs_all_pairs_numba, indptr, indices, n)
            assert np.array_equal(ref, out)
            print(f"{side}x{side:<7} {n:>7} {t_np * 1e3:>10.2f}ms {t_nb * 1e3:>10.2f}ms "
                  f"{t_np / t_nb:>7.1f}x")
        else:
            print(f"{side}x{side:<7} {n:>7} {t_np * 1e3:>10.2f}ms {'-':>12} {'-':>8}")


def bench_candidates():
    print("\nregion-growth candidate scoring (1000 evaluations)")
    print(f"{'grid':>10} {'frontier':>9} {'numpy':>12} {'numba':>12} {'speedup':>8}")
    rng = np.random.default_rng(0)
    for side, frontier_size in ((16, 16), (16, 48), (32, 64), (32, 128)):
        chip = generate_grid(side, side)
        indptr, indices = chip.graph.csr
        n = chip.n_qubits
        owner = np.full(n, -1, dtype=np.int32)
        owner[rng.choice(n, n // 8, replace=False)] = 7
        in_region = np.zeros(n, dtype=np.uint8)
        in_region[rng.choice(n, n // 4, replace=False)] = 1
        cand = rng.choice(n, frontier_size, replace=False).astype(np.int32)

        def many(fn):
            for _ in range(1000):
                fn(indptr, indices, owner, 1, in_region, cand)

        t_np, _ = timeit(many, _kernels.eval_candidates_numpy, repeat=3)
        if _kernels.HAS_NUMBA:
            _kernels.eval_candidates_numba(indptr, indices, owner, 1, in_region, cand)
            t_nb, _ = timeit(many, _kernels.eval_candidates_numba, repeat=3)
            a = _kernels.eval_candidates_numpy(indptr, indices, owner, 1, in_region, cand)
            b = _kernels.eval_candidates_numba(indptr, indices, owner, 1, in_region, cand)
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
            print(f"{side}x{side:<7} {frontier_size:>9} {t_np * 1e3:>10.2f}ms "
                  f"{t_nb * 1e3:>10.2f}ms {t_np / t_nb:>7.1f}x")
        else:
            print(f"{side}x{side:<7} {frontier_size:>9} {t_np * 1e3:>10.2f}ms "
                  f"{'-':>12} {'-':>8}")


if __name__ == "__main__":
    print(f"active backend: {_kernels.backend_name()}")
    print("(set QPUSCHED_NO_NUMBA=1 to force the numpy path in the package)\n")
    bench_bfs()
    bench_candidates()
