"""Bit-packed F2 matrix arithmetic and the rank-factored all-pairs
polynomial evaluation: a polynomial whose monomials split into row and
column parts becomes a product of one n x m and one m x n 0/1 matrix, so a
single rectangular F2 multiply evaluates it on every (row, column) pair.

Multiplication is word-parallel XOR accumulation over 64-bit words.  The
desk-scale strategy is packing, not Coppersmith: the recursive multiplier
lives in its own module as a faithful demonstrator and is deliberately not
wired into this path.
"""

from __future__ import annotations

import numpy as np

from .weights import DimensionMismatch, MinPlusError


class WordOpCounter:
    """Counts 64-bit word operations performed by f2_multiply."""

    def __init__(self):
        self.words = 0

    def reset(self):
        self.words = 0

    def add(self, n):
        self.words += int(n)


WORD_OPS = WordOpCounter()


class BitMatrix:
    """Dense 0/1 matrix packed row-major into uint64 words, 64 columns per
    word, LSB first; padding bits beyond ``cols`` stay zero."""

    __slots__ = ("rows", "cols", "words")

    def __init__(self, rows, cols, words=None):
        self.rows = rows
        self.cols = cols
        nwords = (cols + 63) // 64
        if words is None:
            self.words = np.zeros((rows, nwords), dtype=np.uint64)
        else:
            words = np.asarray(words, dtype=np.uint64)
            if words.shape != (rows, nwords):
                raise DimensionMismatch(f"word array shape {words.shape}")
            self.words = words

    @classmethod
    def from_dense(cls, arr):
        arr = np.asarray(arr)
        if arr.ndim != 2:
            raise DimensionMismatch("dense bit array must be 2-D")
        rows, cols = arr.shape
        out = cls(rows, cols)
        if rows == 0 or cols == 0:
            return out
        bits = (arr & 1).astype(np.uint8)
        pad = (-cols) % 64
        if pad:
            bits = np.concatenate([bits, np.zeros((rows, pad), np.uint8)], axis=1)
        chunks = bits.reshape(rows, -1, 64).astype(np.uint64)
        out.words = (chunks << np.arange(64, dtype=np.uint64)).sum(
            axis=2, dtype=np.uint64
        )
        return out

    def to_dense(self):
        if self.cols == 0:
            return np.zeros((self.rows, 0), dtype=np.uint8)
        shifts = np.arange(64, dtype=np.uint64)
        bits = ((self.words[:, :, None] >> shifts) & np.uint64(1)).astype(np.uint8)
        return bits.reshape(self.rows, -1)[:, : self.cols]

    @classmethod
    def identity(cls, n):
        return cls.from_dense(np.eye(n, dtype=np.uint8))

    def get(self, i, j):
        return int((self.words[i, j // 64] >> np.uint64(j % 64)) & np.uint64(1))

    def xor(self, other):
        if (self.rows, self.cols) != (other.rows, other.cols):
            raise DimensionMismatch("xor shape mismatch")
        return BitMatrix(self.rows, self.cols, self.words ^ other.words)

    def transpose(self):
        return BitMatrix.from_dense(self.to_dense().T)

    def padding_ok(self):
        tail = self.cols % 64
        if tail == 0:
            return True
        mask = ~np.uint64((1 << tail) - 1)
        return not np.any(self.words[:, -1] & mask)

    def __eq__(self, other):
        return (
            isinstance(other, BitMatrix)
            and (self.rows, self.cols) == (other.rows, other.cols)
            and np.array_equal(self.words, other.words)
        )

    def __repr__(self):
        return f"BitMatrix({self.rows}x{self.cols})"


def f2_multiply(X: BitMatrix, Y: BitMatrix, counter: WordOpCounter = WORD_OPS) -> BitMatrix:
    """Z[i,j] = XOR_k X[i,k] & Y[k,j], by branchless masked-XOR accumulation:
    every (row, k) touches all words of Y's row k, so the word count is
    exactly rows * K * words(Y)."""
    if X.cols != Y.rows:
        raise DimensionMismatch(f"inner dims {X.cols} != {Y.rows}")
    xd = X.to_dense()
    out = np.zeros((X.rows, Y.words.shape[1]), dtype=np.uint64)
    # chunk over k to bound the (rows, k, words) intermediate
    step = max(1, (1 << 22) // max(1, X.rows * Y.words.shape[1]))
    for k0 in range(0, X.cols, step):
        k1 = min(X.cols, k0 + step)
        masks = np.uint64(0) - xd[:, k0:k1].astype(np.uint64)  # 0 or all-ones
        out ^= np.bitwise_xor.reduce(
            masks[:, :, None] & Y.words[None, k0:k1, :], axis=1
        )
    counter.add(X.rows * X.cols * Y.words.shape[1])
    Z = BitMatrix(X.rows, Y.cols, out)
    assert Z.padding_ok()
    return Z


def build_evaluation_matrices(p, row_vars, col_vars):
    """M1[i, q] = monomial q's row part on row i; M2[q, j] column part on j.

    (M1 * M2)[i, j] over F2 then equals p(row i, col j) up to the constant,
    which evaluate_all_pairs folds in afterwards.
    """
    row_vars = np.asarray(row_vars, dtype=np.uint8)
    col_vars = np.asarray(col_vars, dtype=np.uint8)
    monos = p.sorted_monomials()
    n, m = row_vars.shape[0], col_vars.shape[0]
    m1 = np.ones((n, len(monos)), dtype=np.uint8)
    m2 = np.ones((len(monos), m), dtype=np.uint8)
    for q, (rset, cset) in enumerate(monos):
        for r in rset:
            if r >= row_vars.shape[1]:
                raise MinPlusError(f"row variable {r} out of range")
            m1[:, q] &= row_vars[:, r]
        for c in cset:
            if c >= col_vars.shape[1]:
                raise MinPlusError(f"column variable {c} out of range")
            m2[q, :] &= col_vars[:, c]
    return BitMatrix.from_dense(m1), BitMatrix.from_dense(m2)


def evaluate_all_pairs(p, row_vars, col_vars) -> BitMatrix:
    """Evaluate a separable polynomial on all (row, column) assignment pairs
    with one rectangular F2 product plus a constant fold."""
    m1, m2 = build_evaluation_matrices(p, row_vars, col_vars)
    z = f2_multiply(m1, m2)
    if p.constant:
        ones = BitMatrix.from_dense(np.ones((z.rows, z.cols), dtype=np.uint8))
        z = z.xor(ones)
    return z
