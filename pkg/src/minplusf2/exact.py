"""Exact min-plus algebra: naive product with witnesses, Floyd-Warshall,
repeated-squaring APSP, and shortest-path reconstruction.

These are the correctness oracles for the randomized fast path.
"""

from __future__ import annotations

import math

import numpy as np

from .weights import (
    ARGMIN_SENTINEL,
    DimensionMismatch,
    INF_ENC,
    MinPlusError,
    OverflowGuard,
    SuccessorMatrix,
    WeightMatrix,
    WitnessMatrix,
    masked_outer_sum,
    sums_to_weights,
    weight_add,
)

_CHUNK_CELLS = 1 << 22  # bound on n*d*m cells materialized at once


def _guard_product(a, b):
    """Raise if any k-sum A[i,k] + B[k,j] over finite entries would exceed 2**62."""
    col_max = np.where(a == INF_ENC, np.int64(-1), a).max(axis=0)
    row_max = np.where(b == INF_ENC, np.int64(-1), b).max(axis=1)
    both = (col_max >= 0) & (row_max >= 0)
    if np.any(both) and int((col_max[both] + row_max[both]).max()) > (1 << 62):
        raise OverflowGuard("min-plus product: finite addition exceeds 2**62")


def minplus_product_naive(A: WeightMatrix, B: WeightMatrix):
    """(A * B)[i,j] = min_k A[i,k] + B[k,j], witness = smallest minimizing k.

    Returns (WeightMatrix, WitnessMatrix); witness entries are 1-based,
    absent where the output cell is INF.
    """
    if A.cols != B.rows:
        raise DimensionMismatch(f"inner dims {A.cols} != {B.rows}")
    a, b = A.raw(), B.raw()
    n, d = a.shape
    m = b.shape[1]
    _guard_product(a, b)

    dist = np.empty((n, m), dtype=np.int64)
    wit = np.empty((n, m), dtype=np.int64)
    step = max(1, _CHUNK_CELLS // max(1, d * m))
    for i0 in range(0, n, step):
        i1 = min(n, i0 + step)
        ainf = a[i0:i1] == INF_ENC
        binf = b == INF_ENC
        sums = a[i0:i1, :, None] + b[None, :, :]
        sums = np.where(ainf[:, :, None] | binf[None, :, :], ARGMIN_SENTINEL, sums)
        k = sums.argmin(axis=1)
        best = np.take_along_axis(sums, k[:, None, :], axis=1)[:, 0, :]
        dist[i0:i1] = sums_to_weights(best)
        wit[i0:i1] = np.where(best >= ARGMIN_SENTINEL, 0, k + 1)
    return WeightMatrix._wrap(dist), WitnessMatrix(wit, d)


def _validate_apsp_input(W: WeightMatrix):
    if W.rows != W.cols:
        raise DimensionMismatch("APSP input must be square")
    diag = np.diagonal(W.raw())
    if np.any(diag != 0):
        raise MinPlusError("APSP input must have a zero diagonal")


def _initial_successors(W: WeightMatrix):
    n = W.rows
    nxt = np.where(W.raw() != INF_ENC, np.arange(n, dtype=np.int64)[None, :], np.int64(-1))
    np.fill_diagonal(nxt, np.arange(n))
    return nxt


def floyd_warshall(W: WeightMatrix):
    """All-pairs distances plus a successor matrix for path reconstruction."""
    _validate_apsp_input(W)
    n = W.rows
    dist = W.raw().copy()
    nxt = _initial_successors(W)
    for k in range(n):
        via = masked_outer_sum(dist[:, k], dist[k, :])
        cur = np.where(dist == INF_ENC, ARGMIN_SENTINEL, dist)
        better = via < cur
        dist = np.where(better, via, dist)
        nxt = np.where(better, nxt[:, k][:, None], nxt)
    return WeightMatrix._wrap(dist), SuccessorMatrix(nxt)


def apsp_by_squaring(W: WeightMatrix, product=None):
    """APSP via ceil(log2 n) squarings D <- min(D, D*D) with witness maintenance.

    ``product`` is any conforming min-plus product (naive by default, or the
    randomized fast one); distances equal floyd_warshall exactly when the
    product is exact.
    """
    _validate_apsp_input(W)
    if product is None:
        product = minplus_product_naive
    n = W.rows
    dist = W.raw().copy()
    nxt = _initial_successors(W)
    for _ in range(max(0, math.ceil(math.log2(n)) if n > 1 else 0)):
        C, wit = product(WeightMatrix._wrap(dist), WeightMatrix._wrap(dist))
        c = C.raw()
        k0 = np.clip(wit.raw() - 1, 0, n - 1)
        hop = np.take_along_axis(nxt, k0, axis=1)
        cur = np.where(dist == INF_ENC, ARGMIN_SENTINEL, dist)
        via = np.where(c == INF_ENC, ARGMIN_SENTINEL, c)
        better = via < cur
        dist = np.where(better, c, dist)
        nxt = np.where(better, hop, nxt)
    return WeightMatrix._wrap(dist), SuccessorMatrix(nxt)


def reconstruct_path(S: SuccessorMatrix, s: int, t: int):
    """Node sequence s..t following successors; [] iff t unreachable, [s] if s == t."""
    n = S.n
    if not (0 <= s < n and 0 <= t < n):
        raise MinPlusError(f"node index out of range: s={s}, t={t}, n={n}")
    if s == t:
        return [s]
    if S.next_hop(s, t) is None:
        return []
    path = [s]
    cur = s
    for _ in range(n):
        cur = S.next_hop(cur, t)
        if cur is None:
            raise MinPlusError("successor chain broke before reaching target")
        path.append(cur)
        if cur == t:
            return path
    raise MinPlusError("successor chain exceeded n hops (cycle)")


def path_weight(W: WeightMatrix, path):
    """Sum of edge weights along a node sequence (INF-aware)."""
    total = 0
    for u, v in zip(path, path[1:]):
        total = weight_add(total, W[u, v])
    return total
