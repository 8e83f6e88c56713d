"""Numeric kernels behind chip distances and region growth.

Two interchangeable implementations exist for each kernel: a numba
``@njit``-compiled version (used by default when numba is importable) and a
pure-numpy fallback. Set ``QPUSCHED_NO_NUMBA=1`` to force the numpy path;
``backend_name()`` reports which one is active. Both variants stay exposed
so ``benchmarks/bench_kernels.py`` can time them side by side.

Graphs arrive as CSR adjacency: ``indptr`` (n+1 int32) and ``indices``
(2m int32, neighbor lists concatenated in qubit order).
"""

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("QPUSCHED_NO_NUMBA", "").strip().lower() in ("1", "true", "yes")


HAS_NUMBA = False
if not _numba_disabled():
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:
        HAS_NUMBA = False


def backend_name() -> str:
    """Identifier of the active kernel backend: 'numba' or 'numpy'."""
    return "numba" if HAS_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# all-pairs BFS hop distances


def bfs_all_pairs_numpy(indptr: np.ndarray, indices: np.ndarray, n: int) -> np.ndarray:
    """Hop distances between all vertex pairs, -1 where unreachable.

    Runs all sources simultaneously: the frontier is an (n, n) indicator
    matrix advanced one level per mat-mul against the adjacency matrix.
    float32 keeps the product on the BLAS path; entries are neighbor
    counts bounded by the degree, far below float32's exact-integer range.
    """
    adj = np.zeros((n, n), dtype=np.float32)
    for u in range(n):
        adj[u, indices[indptr[u]:indptr[u + 1]]] = 1.0
    dist = np.full((n, n), -1, dtype=np.int32)
    np.fill_diagonal(dist, 0)
    frontier = np.eye(n, dtype=np.float32)
    level = 0
    while frontier.any():
        level += 1
        reached = (frontier @ adj) > 0
        fresh = reached & (dist < 0)
        dist[fresh] = level
        frontier = fresh.astype(np.float32)
    return dist


def _bfs_all_pairs_py(indptr, indices, n):
    dist = np.full((n, n), -1, dtype=np.int32)
    queue = np.empty(n, dtype=np.int32)
    for s in range(n):
        drow = dist[s]
        drow[s] = 0
        queue[0] = s
        head = 0
        tail = 1
        while head < tail:
            u = queue[head]
            head += 1
            du = drow[u]
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if drow[v] < 0:
                    drow[v] = du + 1
                    queue[tail] = v
                    tail += 1
    return dist


# ---------------------------------------------------------------------------
# region-growth candidate scoring
#
# For each candidate qubit c the greedy needs (a) how many of c's neighbors
# already sit in the growing region and (b) whether c touches a qubit owned
# by a different group (buffer violation). Owner is -1 for free qubits.


def eval_candidates_numpy(indptr, indices, owner, group_id, in_region, cand):
    k = len(cand)
    links = np.zeros(k, dtype=np.int64)
    foreign = np.zeros(k, dtype=np.uint8)
    for i in range(k):
        nbrs = indices[indptr[cand[i]]:indptr[cand[i] + 1]]
        links[i] = int(in_region[nbrs].sum())
        own = owner[nbrs]
        if np.any((own >= 0) & (own != group_id)):
            foreign[i] = 1
    return links, foreign


def _eval_candidates_py(indptr, indices, owner, group_id, in_region, cand):
    k = cand.shape[0]
    links = np.zeros(k, dtype=np.int64)
    foreign = np.zeros(k, dtype=np.uint8)
    for i in range(k):
        c = cand[i]
        l = 0
        f = 0
        for t in range(indptr[c], indptr[c + 1]):
            w = indices[t]
            if in_region[w]:
                l += 1
            o = owner[w]
            if o >= 0 and o != group_id:
                f = 1
        links[i] = l
        foreign[i] = f
    return links, foreign


if HAS_NUMBA:
    bfs_all_pairs_numba = njit(cache=True)(_bfs_all_pairs_py)
    eval_candidates_numba = njit(cache=True)(_eval_candidates_py)
    bfs_all_pairs = bfs_all_pairs_numba
    eval_candidates = eval_candidates_numba
else:
    bfs_all_pairs = bfs_all_pairs_numpy
    eval_candidates = eval_candidates_numpy
