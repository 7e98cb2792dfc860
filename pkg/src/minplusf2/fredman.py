"""Preprocessing that turns a rectangular min-plus product into pure rank
comparisons: uniqueness perturbation, difference matrices (Fredman's trick),
and per-slot rank replacement producing matrices with entries in {1..2n}.

Pipeline: replace INF by a finite surrogate, perturb so every (i, j) has a
unique winning k (the smallest original argmin), take all pairwise
differences indexed by slots (k, k'), then compress each slot's values to
ranks.  Comparisons A''[i,(k,k')] <= B''[(k,k'),j] are preserved exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .weights import (
    ADD_GUARD,
    DimensionMismatch,
    INF_ENC,
    MinPlusError,
    OverflowGuard,
    WeightMatrix,
)


@dataclass
class PerturbedPair:
    """A and B after Ap[i,k] = A[i,k]*scale + k, Bp[k,j] = B[k,j]*scale."""

    Ap: WeightMatrix
    Bp: WeightMatrix
    scale: int


@dataclass
class RankedPairMatrices:
    """Slot-ranked difference matrices; entries in {1..rows+cols}.

    Slot (k, k') with 1-based k, k' maps to column/row index
    (k-1)*d + (k'-1) (row-major lexicographic over [d]^2).
    """

    app: np.ndarray  # (rows, d*d) int64
    bpp: np.ndarray  # (d*d, cols) int64
    d: int

    @property
    def rows(self):
        return self.app.shape[0]

    @property
    def cols(self):
        return self.bpp.shape[1]

    @property
    def rank_count(self):
        return self.rows + self.cols


def slot_index(k: int, kp: int, d: int) -> int:
    """Column index of slot (k, k'), both 1-based."""
    return (k - 1) * d + (kp - 1)


def replace_infinite(A: WeightMatrix, B: WeightMatrix):
    """Map INF to the finite surrogate 2*(max finite entry)+1.

    Any sum containing a surrogate exceeds any fully-finite sum, so all
    order relations among sums survive; callers restore INF afterwards.
    Returns (Asur, Bsur, surrogate) as int64 arrays.
    """
    finite_max = max(
        [v for v in (A.max_finite(), B.max_finite()) if v is not None], default=0
    )
    surrogate = 2 * finite_max + 1
    a = np.where(A.raw() == INF_ENC, np.int64(surrogate), A.raw())
    b = np.where(B.raw() == INF_ENC, np.int64(surrogate), B.raw())
    return a, b, surrogate


def perturb(A: WeightMatrix, B: WeightMatrix) -> PerturbedPair:
    """Scale by n+1 and add the column index k to A so argmins become unique.

    The perturbed argmin equals the smallest original argmin, and the
    original min is floor(perturbed min / (n+1)).  INF entries stay INF
    (saturating); the fast path replaces them by a surrogate first.
    """
    n, d = A.rows, A.cols
    if B.rows != d:
        raise DimensionMismatch(f"inner dims {d} != {B.rows}")
    if d > n:
        raise MinPlusError(f"perturbation scale n+1={n + 1} must exceed d={d}")
    scale = n + 1
    top = max(A.max_finite() or 0, B.max_finite() or 0)
    if top * scale + d > ADD_GUARD:
        raise OverflowGuard(
            f"perturbed value {top}*{scale}+{d} exceeds the weight bound 2**62"
        )
    a, b = A.raw(), B.raw()
    ks = np.arange(1, d + 1, dtype=np.int64)
    ap = np.where(a == INF_ENC, np.int64(INF_ENC), a * scale + ks[None, :])
    bp = np.where(b == INF_ENC, np.int64(INF_ENC), b * scale)
    return PerturbedPair(WeightMatrix._wrap(ap), WeightMatrix._wrap(bp), scale)


def difference_matrices(pair: PerturbedPair):
    """Fredman's trick: Apr[i,(k,k')] = Ap[i,k]-Ap[i,k'], Bpr[(k,k'),j] =
    Bp[k',j]-Bp[k,j], so Apr <= Bpr iff the k-sum is <= the k'-sum.

    Requires fully finite inputs (surrogate already applied); signed output.
    """
    ap, bp = pair.Ap.raw(), pair.Bp.raw()
    if np.any(ap == INF_ENC) or np.any(bp == INF_ENC):
        raise MinPlusError("difference matrices need the INF surrogate applied first")
    d = ap.shape[1]
    apr = (ap[:, :, None] - ap[:, None, :]).reshape(ap.shape[0], d * d)
    bpr = (bp[None, :, :] - bp[:, None, :]).reshape(d * d, bp.shape[1])
    return apr, bpr


def rank_replace(apr: np.ndarray, bpr: np.ndarray) -> RankedPairMatrices:
    """Per-slot sort of the rows+cols values with A entries preceding B on
    ties (B-B ties broken by smaller column index); ranks 1..rows+cols."""
    n, s = apr.shape
    m = bpr.shape[1]
    if bpr.shape[0] != s:
        raise DimensionMismatch("slot counts differ")
    d = round(s**0.5)
    if d * d != s:
        raise DimensionMismatch(f"slot count {s} is not a square")
    # (slots, n+m) with A values first; lexsort keys: value, then position
    # (positions 0..n-1 are A entries, n..n+m-1 are B), giving A precedence
    # and index-ordered ties within each side.
    vals = np.concatenate([apr.T, bpr], axis=1)
    order = np.argsort(vals, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.arange(1, n + m + 1, dtype=np.int64)[None, :], axis=1)
    return RankedPairMatrices(app=ranks[:, :n].T.copy(), bpp=ranks[:, n:].copy(), d=d)
