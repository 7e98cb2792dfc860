"""Shared independent oracles for the test suite.

Everything here is written against the problem statements, not against the
library internals: triple loops, per-source Bellman-Ford, brute-force scans.
"""

import numpy as np

from minplusf2.weights import INF, WeightMatrix


def random_weight_matrix(rng, rows, cols, max_w=9, inf_prob=0.0):
    vals = rng.integers(0, max_w + 1, size=(rows, cols)).astype(object)
    if inf_prob > 0:
        mask = rng.random((rows, cols)) < inf_prob
        vals[mask] = INF
    return WeightMatrix(vals.tolist())


def random_graph_matrix(rng, n, max_w=100, density=0.5):
    """Adjacency matrix: zero diagonal, finite off-diagonal with prob density."""
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            if i == j:
                row.append(0)
            elif rng.random() < density:
                row.append(int(rng.integers(0, max_w + 1)))
            else:
                row.append(INF)
        rows.append(row)
    return WeightMatrix(rows)


def triple_loop_product(A, B):
    """Brute-force min-plus product with smallest-k witnesses (1-based)."""
    n, d, m = A.rows, A.cols, B.cols
    dist = [[INF] * m for _ in range(n)]
    wit = [[0] * m for _ in range(n)]
    for i in range(n):
        for j in range(m):
            best, bk = INF, 0
            for k in range(d):
                a, b = A[i, k], B[k, j]
                if a is INF or b is INF:
                    continue
                s = a + b
                if best is INF or s < best:
                    best, bk = s, k + 1
            dist[i][j] = best
            wit[i][j] = bk
    return dist, wit


def bellman_ford_all_sources(W):
    """Per-source Bellman-Ford distances (early exit when stable)."""
    n = W.rows
    edges = [
        (u, v, W[u, v])
        for u in range(n)
        for v in range(n)
        if u != v and W[u, v] is not INF
    ]
    out = []
    for s in range(n):
        dist = [INF] * n
        dist[s] = 0
        for _ in range(n):
            changed = False
            for u, v, w in edges:
                if dist[u] is INF:
                    continue
                cand = dist[u] + w
                if dist[v] is INF or cand < dist[v]:
                    dist[v] = cand
                    changed = True
            if not changed:
                break
        out.append(dist)
    return out


def weights_equal(matrix, lists):
    return matrix.to_lists() == lists


def rng_for(seed):
    return np.random.default_rng(seed)
