"""Desk-scale implementation of the five-multiplication rectangular matrix
multiplier: the partial 2x3-by-3x2 identity, its recursive tensor powers on
structured-sparsity matrices over a prime field with truncated polynomial
arithmetic, Vandermonde pre/post-processing, the three derived algorithms,
and the tensored rectangular multiply.

Shapes and patterns.  The base identity multiplies a 2x3 matrix with zero
at position (2,1) by a 3x2 matrix with zeros at (2,2) and (3,2) using five
products of linear forms in a polynomial indeterminate x; the true product
appears in the x^2 coefficient, junk at x^3 and above.  Tensor powers give
2^M x 3^M by 3^M x 2^M multiplication where the A side has exactly 5^M
admissible positions, the B side 4^M, and the output 3^M, each pattern the
M-fold product of its base pattern.  Patterned matrices are stored as flat
vectors in recursive chunk order, so every level of the recursion is a
reshape plus slice arithmetic; polynomial values ride a trailing degree
axis truncated at degree 3M+1 (the extracted coefficient sits at 2M, which
is validated against the naive oracle rather than assumed).

The trace rotation of the same identity computes a 3^M x 2^M by
2^M x 2^M partial product landing on the transposed A pattern; that is the
engine behind the second and third algorithms.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .weights import DimensionMismatch, MinPlusError

DEFAULT_PRIME = (1 << 31) - 1

# base patterns, 0-based (row, col) within the level: chunk order is the
# storage order of the flat representation
A_CHUNKS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2))  # (bit, trit), zero at (1, 0)
B_CHUNKS = ((0, 0), (0, 1), (1, 0), (2, 0))          # (trit, bit), zeros at (1,1),(2,1)
C_CHUNKS = ((0, 0), (0, 1), (1, 0))                  # (bit, bit), zero at (1, 1)
W_CHUNKS = ((0, 0), (1, 0), (2, 0), (1, 1), (2, 1))  # (trit, bit): A pattern transposed

_PATTERNS = {
    "A": (A_CHUNKS, 2, 3),
    "B": (B_CHUNKS, 3, 2),
    "C": (C_CHUNKS, 2, 2),
    "W": (W_CHUNKS, 3, 2),
}


class OpCounters:
    """Field multiplications and base polynomial multiplications."""

    def __init__(self):
        self.field = 0
        self.poly = 0

    def reset(self):
        self.field = 0
        self.poly = 0


COUNTERS = OpCounters()


# ---------------------------------------------------------------------------
# modular linear algebra

def mod_matmul(A, B, p, counters=None):
    """Exact (.., R, K) @ (.., K, C) mod p via 16-bit limb splitting."""
    A = np.asarray(A, np.int64) % p
    B = np.asarray(B, np.int64) % p
    k = A.shape[-1]
    if k > 60000:
        raise MinPlusError("inner dimension too large for limb accumulation")
    hi = A >> 16
    lo = A & 0xFFFF
    out = ((((hi @ B) % p) << 16) + (lo @ B)) % p
    if counters is not None:
        counters.field += A.size * B.shape[-1]
    return out


def mod_solve(A, B, p, counters=None):
    """Gauss-Jordan solve A X = B over F_p; raises on singular A."""
    n = A.shape[0]
    aug = np.concatenate([np.asarray(A, np.int64) % p, np.asarray(B, np.int64) % p], axis=1)
    width = aug.shape[1]
    for col in range(n):
        piv_rows = np.nonzero(aug[col:, col])[0]
        if piv_rows.size == 0:
            raise MinPlusError("singular matrix in modular solve")
        piv = col + int(piv_rows[0])
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        inv = pow(int(aug[col, col]), p - 2, p)
        aug[col] = aug[col] * inv % p
        factors = aug[:, col].copy()
        factors[col] = 0
        aug = (aug - factors[:, None] * aug[col][None, :]) % p
        if counters is not None:
            counters.field += width + n * width + 32
    return aug[:, n:]


def mod_inv_matrix(A, p, counters=None):
    return mod_solve(A, np.eye(A.shape[0], dtype=np.int64), p, counters)


# ---------------------------------------------------------------------------
# pattern bookkeeping

def _digits(vals, base, M):
    """Base-`base` digits of vals, most significant level first: (len, M)."""
    vals = np.asarray(vals, np.int64)
    out = np.empty((vals.size, M), np.int64)
    v = vals.copy()
    for lvl in range(M - 1, -1, -1):
        out[:, lvl] = v % base
        v //= base
    return out


def _chunk_table(side):
    chunks, rb, cb = _PATTERNS[side]
    table = -np.ones((rb, cb), dtype=np.int64)
    for idx, (r, c) in enumerate(chunks):
        table[r, c] = idx
    return table, rb, cb


def pattern_size(side, M):
    return len(_PATTERNS[side][0]) ** M


def pattern_positions(side, M):
    """(rows, cols) arrays of the pattern's admissible cells in flat order."""
    chunks, rb, cb = _PATTERNS[side]
    rows = np.zeros(1, np.int64)
    cols = np.zeros(1, np.int64)
    rdim, cdim = 1, 1
    for _ in range(M):
        rows = np.concatenate([r * rdim + rows for r, _ in chunks])
        cols = np.concatenate([c * cdim + cols for _, c in chunks])
        rdim *= rb
        cdim *= cb
    return rows, cols


def pattern_flat_index(side, M, rows, cols):
    """Flat storage index of pattern cells given by (rows, cols) arrays."""
    table, rb, cb = _chunk_table(side)
    rd = _digits(rows, rb, M)
    cd = _digits(cols, cb, M)
    ids = table[rd, cd]
    if np.any(ids < 0):
        raise MinPlusError("position outside the sparsity pattern")
    fan = len(_PATTERNS[side][0])
    out = np.zeros(rd.shape[0], np.int64)
    for lvl in range(M):
        out = out * fan + ids[:, lvl]
    return out


@dataclass
class StructuredFieldMatrix:
    """Prime-field matrix constrained to a tensor-power sparsity pattern,
    stored as the flat vector of its admissible cells."""

    side: str  # "A" or "B"
    level: int
    flat: np.ndarray  # (5^M,) or (4^M,) int64 residues

    @property
    def shape(self):
        _, rb, cb = _PATTERNS[self.side]
        return (rb**self.level, cb**self.level)

    @classmethod
    def from_dense(cls, dense, side, p=DEFAULT_PRIME):
        dense = np.asarray(dense, np.int64) % p
        _, rb, cb = _PATTERNS[side]
        M = 0
        r = dense.shape[0]
        while r > 1:
            r //= rb
            M += 1
        if dense.shape != (rb**M, cb**M):
            raise DimensionMismatch(f"shape {dense.shape} is not a {side}-pattern power")
        rows, cols = pattern_positions(side, M)
        leftover = dense.copy()
        leftover[rows, cols] = 0
        if leftover.any():
            raise MinPlusError(f"nonzero entries outside the {side} pattern")
        return cls(side=side, level=M, flat=dense[rows, cols].copy())

    def to_dense(self):
        _, rb, cb = _PATTERNS[self.side]
        out = np.zeros(self.shape, np.int64)
        rows, cols = pattern_positions(self.side, self.level)
        out[rows, cols] = self.flat
        return out

    @classmethod
    def random(cls, side, M, rng, p=DEFAULT_PRIME):
        return cls(side=side, level=M,
                   flat=rng.integers(0, p, size=pattern_size(side, M)).astype(np.int64))


# ---------------------------------------------------------------------------
# the base identity, symbolically

def base_identity_check():
    """Expand the five trilinear products over indeterminates and confirm the
    x^0 and x^1 coefficients vanish while x^2 carries the six-term target.

    Returns "verified" or a description of the first mismatch."""
    import sympy as sp

    x = sp.Symbol("x")
    a11, a12, a13, a22, a23 = sp.symbols("a11 a12 a13 a22 a23")
    b11, b12, b21, b31 = sp.symbols("b11 b12 b21 b31")
    c11, c12, c21 = sp.symbols("c11 c12 c21")

    products = [
        (a11 + x**2 * a12) * (b21 + x**2 * b11) * c11,
        (a11 + x**2 * a13) * b31 * (c11 - x * c21),
        (a11 + x**2 * a22) * (b21 - x * b12) * c12,
        (a11 + x**2 * a23) * (b31 + x * b12) * (c12 + x * c21),
        -a11 * (b21 + b31) * (c11 + c12),
    ]
    lhs = sp.expand(sum(products))
    target = (
        a11 * b11 * c11 + a11 * b12 * c21 + a12 * b21 * c11
        + a13 * b31 * c11 + a22 * b21 * c12 + a23 * b31 * c12
    )
    poly = sp.Poly(lhs, x)
    if poly.coeff_monomial(1) != 0:
        return f"x^0 coefficient is {poly.coeff_monomial(1)}"
    if poly.coeff_monomial(x) != 0:
        return f"x^1 coefficient is {poly.coeff_monomial(x)}"
    residue = sp.expand(poly.coeff_monomial(x**2) - target)
    if residue != 0:
        return f"x^2 coefficient differs from target by {residue}"
    return "verified"


# ---------------------------------------------------------------------------
# the recursion engine on flat patterned arrays

_BATCH_CELLS = 2_000_000


def _xshift(arr, k, p):
    """Multiply by x^k: shift the degree axis (axis 1), truncating the top."""
    out = np.zeros_like(arr)
    out[:, k:] = arr[:, : arr.shape[1] - k]
    return out


def _a_forms(ch, p):
    a11, a12, a13, a22, a23 = ch
    return [
        (a11 + _xshift(a12, 2, p)) % p,
        (a11 + _xshift(a13, 2, p)) % p,
        (a11 + _xshift(a22, 2, p)) % p,
        (a11 + _xshift(a23, 2, p)) % p,
        a11 % p,
    ]


def _b_forms(ch, p):
    b11, b12, b21, b31 = ch
    return [
        (b21 + _xshift(b11, 2, p)) % p,
        b31 % p,
        (b21 - _xshift(b12, 1, p)) % p,
        (b31 + _xshift(b12, 1, p)) % p,
        (b21 + b31) % p,
    ]


def _c_forms(ch, p):
    c11, c12, c21 = ch
    return [
        c11 % p,
        (c11 - _xshift(c21, 1, p)) % p,
        c12 % p,
        (c12 + _xshift(c21, 1, p)) % p,
        (c11 + c12) % p,
    ]


def _c_combine(ms, p):
    m1, m2, m3, m4, m5 = ms
    return [
        (m1 + m2 - m5) % p,
        _xshift((m4 - m2) % p, 1, p),
        (m3 + m4 - m5) % p,
    ]


def _w_combine(ms, p):
    m1, m2, m3, m4, m5 = ms
    return [
        (m1 + m2 + m3 + m4 - m5) % p,
        _xshift(m1, 2, p),
        _xshift(m2, 2, p),
        _xshift(m3, 2, p),
        _xshift(m4, 2, p),
    ]


def _split_chunks(arr, fan):
    """(E, D, *extra) -> list of fan chunk views (E/fan, D, *extra)."""
    grouped = arr.reshape((fan, arr.shape[0] // fan) + arr.shape[1:])
    return [grouped[i] for i in range(fan)]


def _stack_level(arr, fan, forms, p):
    """Apply operand forms one level down with a leading branch axis:
    (K, E, D, *extra) -> (5K, E/fan, D, *extra)."""
    K, E = arr.shape[0], arr.shape[1]
    grouped = arr.reshape((K, fan, E // fan) + arr.shape[2:])
    outs = forms([grouped[:, i] for i in range(fan)], p)
    stacked = np.stack(outs, axis=1)
    return stacked.reshape((K * 5, E // fan) + arr.shape[2:])


def _combine_level(prods, out_fan, combine, p):
    """(5K, E, D, *extra) -> (K, out_fan*E, D, *extra)."""
    K5 = prods.shape[0]
    grouped = prods.reshape((K5 // 5, 5) + prods.shape[1:])
    outs = combine([grouped[:, i] for i in range(5)], p)
    return np.concatenate(outs, axis=1)


def _multiply_flat(a, b, level, p, leaf, lforms, rforms, combine, out_fan):
    """Core recursion: flat operands (E, D, *extra) for one branch."""
    cells = (5**level) * a.shape[1] * int(np.prod(a.shape[2:], dtype=np.int64))
    if level > 0 and cells > _BATCH_CELLS:
        la = lforms(_split_chunks(a, _form_fan(lforms)), p)
        lb = rforms(_split_chunks(b, _form_fan(rforms)), p)
        ms = [
            _multiply_flat(la[s], lb[s], level - 1, p, leaf, lforms, rforms, combine, out_fan)
            for s in range(5)
        ]
        return np.concatenate(combine(ms, p), axis=0)
    # batched descent over all remaining levels
    aa = a[None]
    bb = b[None]
    for _ in range(level):
        aa = _stack_level(aa, _form_fan(lforms), lforms, p)
        bb = _stack_level(bb, _form_fan(rforms), rforms, p)
    prod = leaf(aa[:, 0], bb[:, 0])
    cc = prod[:, None]
    for _ in range(level):
        cc = _combine_level(cc, out_fan, combine, p)
    return cc[0]


def _form_fan(forms):
    return {_a_forms: 5, _b_forms: 4, _c_forms: 3}[forms]


def _scalar_leaf(p, counters):
    def leaf(a, b):
        # a, b: (K, D, *extra); truncated polynomial product per branch
        counters.poly += a.shape[0]
        D = a.shape[1]
        out = np.zeros(a.shape, np.int64)
        a_deg = [d for d in range(D) if a[:, d].any()]
        b_deg = [d for d in range(D) if b[:, d].any()]
        for d1 in a_deg:
            av = a[:, d1]
            for d2 in b_deg:
                if d1 + d2 >= D:
                    continue
                out[:, d1 + d2] += av * b[:, d2] % p
                counters.field += av.size
        return out % p

    return leaf


def degree_cap(M):
    """Coefficients 0..3M+1 are retained; the target lives at 2M."""
    return 3 * M + 2


def extraction_degree(M):
    return 2 * M


def _flat_with_degree(values, D):
    out = np.zeros(values.shape[:1] + (D,) + values.shape[1:], np.int64)
    out[:, 0] = values
    return out


def structured_multiply(A: StructuredFieldMatrix, B: StructuredFieldMatrix,
                        p=DEFAULT_PRIME, counters: OpCounters = COUNTERS):
    """Exact product of patterned operands via 5^M base polynomial
    multiplications; returns the dense 2^M x 2^M result."""
    if A.side != "A" or B.side != "B":
        raise MinPlusError("structured_multiply wants an A-side and a B-side operand")
    if A.level != B.level:
        raise DimensionMismatch("pattern levels differ")
    M = A.level
    D = degree_cap(M)
    cflat = _multiply_flat(
        _flat_with_degree(A.flat, D), _flat_with_degree(B.flat, D),
        M, p, _scalar_leaf(p, counters), _a_forms, _b_forms, _c_combine, 3,
    )
    out = np.zeros((2**M, 2**M), np.int64)
    rows, cols = pattern_positions("C", M)
    out[rows, cols] = cflat[:, extraction_degree(M)]
    return out


def rotated_multiply_flat(bflat, cflat, M, p, leaf):
    """Partial product B (B-pattern) times C (C-pattern positions of a
    2^M x 2^M matrix), landing on the transposed-A pattern; flat in, flat out."""
    return _multiply_flat(bflat, cflat, M, p, leaf, _b_forms, _c_forms, _w_combine, 5)


# ---------------------------------------------------------------------------
# Vandermonde decomposition and the derived algorithms

@dataclass
class VandermondeSpec:
    """Evaluation points and shape tag for a rectangular Vandermonde matrix."""

    points: np.ndarray  # distinct nonzero field elements
    shape: tuple  # (rows, cols)
    side: str  # "A": V[i, j] = points[j]^i; "B": V[i, j] = points[i]^j


def vandermonde_spec(M, side, p=DEFAULT_PRIME):
    if (1 << M) >= p:
        raise MinPlusError(f"field too small for 2^{M} distinct points")
    points = np.arange(1, (1 << M) + 1, dtype=np.int64)
    if side == "A":
        return VandermondeSpec(points, (1 << (4 * M // 5), 1 << M), "A")
    return VandermondeSpec(points, (1 << M, 1 << (M // 5)), "B")


def vandermonde_matrix(spec: VandermondeSpec, p=DEFAULT_PRIME):
    rows, cols = spec.shape
    if spec.side == "A":
        out = np.empty((rows, cols), np.int64)
        row = np.ones(cols, np.int64)
        for i in range(rows):
            out[i] = row
            row = row * spec.points % p
        return out
    out = np.empty((rows, cols), np.int64)
    col = np.ones(rows, np.int64)
    for j in range(cols):
        out[:, j] = col
        col = col * spec.points % p
    return out


def _require_m5(M):
    if M % 5 != 0 or M < 5:
        raise MinPlusError("this construction needs M to be a positive multiple of 5")


def mapped_indices(M):
    """3^M indices with exactly M/5 zero trits, ascending: the one-to-one
    mapping between input columns/rows and pattern columns/rows with exactly
    2^{4M/5} (A side) or 2^{M/5} (B side) admissible cells."""
    trits = _digits(np.arange(3**M), 3, M)
    return np.nonzero((trits == 0).sum(axis=1) == M // 5)[0]


def mapped_count(M):
    return comb(M, M // 5) * (1 << (4 * M // 5))


def _support_classes(M):
    """Group mapped indices by their set of zero-trit levels."""
    idx = mapped_indices(M)
    trits = _digits(idx, 3, M)
    classes = {}
    for pos, levels in enumerate((trits == 0).astype(np.int64)):
        key = tuple(np.nonzero(levels)[0].tolist())
        classes.setdefault(key, []).append(pos)
    return idx, classes


def _rows_with_zero_bits(levels, M):
    """Row indices of 2^M whose bits vanish on the given levels."""
    r = np.arange(1 << M, dtype=np.int64)
    keep = np.ones(r.size, bool)
    for lvl in levels:
        keep &= (r >> (M - 1 - lvl)) & 1 == 0
    return r[keep]


def _cols_supported_on(levels, M):
    """Column indices of 2^M whose set bits lie inside the given levels."""
    r = np.arange(1 << M, dtype=np.int64)
    keep = np.ones(r.size, bool)
    for lvl in range(M):
        if lvl not in levels:
            keep &= (r >> (M - 1 - lvl)) & 1 == 0
    return r[keep]


def decompose(Ain, side, spec: VandermondeSpec, p=DEFAULT_PRIME,
              counters: OpCounters = COUNTERS) -> StructuredFieldMatrix:
    """Fold a dense input into the sparse pattern so that the Vandermonde
    product reproduces it on the mapped columns (A side: V*A) or rows
    (B side: B*V); verified by re-multiplication in the tests."""
    Ain = np.asarray(Ain, np.int64) % p
    V = vandermonde_matrix(spec, p)
    if side == "A":
        M = round(np.log2(spec.shape[0]) * 5 / 4)
        _require_m5(M)
        if Ain.shape != (1 << (4 * M // 5), mapped_count(M)):
            raise DimensionMismatch(f"A-side input shape {Ain.shape}")
        idx, classes = _support_classes(M)
        flat = np.zeros(pattern_size("A", M), np.int64)
        for levels, members in classes.items():
            support = _rows_with_zero_bits(levels, M)
            coeffs = mod_solve(V[:, support], Ain[:, members], p, counters)
            cols = idx[members]
            rr = np.repeat(support, len(members))
            cc = np.tile(cols, len(support))
            flat[pattern_flat_index("A", M, rr, cc)] = coeffs.reshape(-1)
        return StructuredFieldMatrix("A", M, flat)
    # B side: solve rows against the transposed minor
    M = round(np.log2(spec.shape[0]))
    _require_m5(M)
    if Ain.shape != (mapped_count(M), 1 << (M // 5)):
        raise DimensionMismatch(f"B-side input shape {Ain.shape}")
    idx, classes = _support_classes(M)
    flat = np.zeros(pattern_size("B", M), np.int64)
    for levels, members in classes.items():
        support = _cols_supported_on(levels, M)
        minor = V[support, :]
        coeffs = mod_solve(minor.T, Ain[members, :].T, p, counters).T
        rows_pat = idx[members]
        rr = np.repeat(rows_pat, len(support))
        cc = np.tile(support, len(members))
        flat[pattern_flat_index("B", M, rr, cc)] = coeffs.reshape(-1)
    return StructuredFieldMatrix("B", M, flat)


def algorithm1(Ain, Bin, p=DEFAULT_PRIME, counters: OpCounters = COUNTERS):
    """2^{4M/5} x mapped_count(M) times mapped_count(M) x 2^{M/5}: decompose
    both sides, multiply the patterned operands, undo with Vandermondes."""
    Ain = np.asarray(Ain, np.int64)
    Bin = np.asarray(Bin, np.int64)
    M = round(np.log2(Ain.shape[0]) * 5 / 4)
    _require_m5(M)
    spec_a = vandermonde_spec(M, "A", p)
    spec_b = vandermonde_spec(M, "B", p)
    A = decompose(Ain, "A", spec_a, p, counters)
    B = decompose(Bin, "B", spec_b, p, counters)
    Z = structured_multiply(A, B, p, counters)
    VA = vandermonde_matrix(spec_a, p)
    VB = vandermonde_matrix(spec_b, p)
    return mod_matmul(mod_matmul(VA, Z, p, counters), VB, p, counters)


def _c_pattern_of_dense(dense, M):
    rows, cols = pattern_positions("C", M)
    return dense[..., rows, cols]


def algorithm2(Bin, Cin, p=DEFAULT_PRIME, counters: OpCounters = COUNTERS):
    """mapped_count(M) x 2^{M/5} times 2^{M/5} x 2^{4M/5} via the trace
    rotation: decompose B, sandwich C between the Vandermondes, run the
    rotated recursion, then peel each mapped row with an inverse minor.

    Supports leading batch axes on both inputs."""
    Bin = np.asarray(Bin, np.int64) % p
    Cin = np.asarray(Cin, np.int64) % p
    batch = Bin.shape[:-2]
    M = round(np.log2(Bin.shape[-1]) * 5)
    _require_m5(M)
    if Bin.shape[-2:] != (mapped_count(M), 1 << (M // 5)):
        raise DimensionMismatch(f"B-side input shape {Bin.shape}")
    if Cin.shape[-2:] != (1 << (M // 5), 1 << (4 * M // 5)):
        raise DimensionMismatch(f"C-side input shape {Cin.shape}")
    if Cin.shape[:-2] != batch:
        raise DimensionMismatch("batch axes differ")

    spec_a = vandermonde_spec(M, "A", p)
    spec_b = vandermonde_spec(M, "B", p)
    VA = vandermonde_matrix(spec_a, p)
    VB = vandermonde_matrix(spec_b, p)
    idx, classes = _support_classes(M)

    # B'' -> patterned B, batched: per class, coefficients = rows @ minor^{-1}
    flat_b = np.zeros(batch + (pattern_size("B", M),), np.int64)
    b_cols = 1 << (M // 5)
    for levels, members in classes.items():
        support = _cols_supported_on(levels, M)
        minor_inv = mod_inv_matrix(VB[support, :], p, counters)
        coeffs = mod_matmul(Bin[..., members, :], minor_inv, p, counters)
        rows_pat = idx[members]
        rr = np.repeat(rows_pat, len(support))
        cc = np.tile(support, len(members))
        flat_b[..., pattern_flat_index("B", M, rr, cc)] = coeffs.reshape(batch + (-1,))

    # C := B' * C'' * A', restricted to the C pattern
    mid = mod_matmul(mod_matmul(VB, Cin, p, counters), VA, p, counters)
    flat_c = _c_pattern_of_dense(mid, M)

    # engine wants (E, D, *extra): move batch behind the degree axis
    D = degree_cap(M)
    ba = _flat_with_degree(np.moveaxis(flat_b, -1, 0), D)
    ca = _flat_with_degree(np.moveaxis(flat_c, -1, 0), D)
    wflat = rotated_multiply_flat(ba, ca, M, p, _scalar_leaf(p, counters))
    wvals = np.moveaxis(wflat[:, extraction_degree(M)], 0, -1)  # batch + (5^M,)

    # peel: out[q, :] = W[m_q, R_q] @ inv(VA[:, R_q]) per support class
    out = np.zeros(batch + (mapped_count(M), 1 << (4 * M // 5)), np.int64)
    for levels, members in classes.items():
        support = _rows_with_zero_bits(levels, M)
        rows_pat = idx[members]
        m_rep = np.repeat(rows_pat, len(support))
        i_til = np.tile(support, len(members))
        gathered = wvals[..., pattern_flat_index("W", M, m_rep, i_til)]
        gathered = gathered.reshape(batch + (len(members), len(support)))
        minor_inv = mod_inv_matrix(VA[:, support], p, counters)
        out[..., members, :] = mod_matmul(gathered, minor_inv, p, counters)
    return out


def algorithm3(Ct, Bt, p=DEFAULT_PRIME, counters: OpCounters = COUNTERS):
    """2^{4M/5} x 2^{M/5} times 2^{M/5} x mapped_count(M): transpose wrapper
    over the rotated algorithm.  Supports leading batch axes."""
    Ct = np.asarray(Ct, np.int64)
    Bt = np.asarray(Bt, np.int64)
    swapped = algorithm2(
        np.swapaxes(Bt, -1, -2), np.swapaxes(Ct, -1, -2), p, counters
    )
    return np.swapaxes(swapped, -1, -2)


def tensored_rect_multiply(P, Q, p=DEFAULT_PRIME, counters: OpCounters = COUNTERS):
    """(mapped_count(M)*2^{4M/5}) x 2^{2M/5} times its transpose shape.

    Runs the rotated algorithm at the block level: P is a block matrix of
    shape mapped_count(M) x 2^{M/5} with 2^{4M/5} x 2^{M/5} blocks, Q is
    2^{M/5} x 2^{4M/5} with 2^{M/5} x mapped_count(M) blocks, and every
    block-pair product dispatches to the transposed algorithm, batched over
    all pending pairs of one degree combination at a time."""
    P = np.asarray(P, np.int64) % p
    Q = np.asarray(Q, np.int64) % p
    M = round(np.log2(P.shape[1]) * 5 / 2)  # small dimension is 2^{2M/5}
    _require_m5(M)
    br, bc = 1 << (4 * M // 5), 1 << (M // 5)
    nm = mapped_count(M)
    if P.shape != (nm * br, bc * bc) or Q.shape != (bc * bc, br * nm):
        raise DimensionMismatch(f"tensored shapes {P.shape} x {Q.shape}")

    # block views: P grid (nm, bc) of (br, bc); Q grid (bc, br) of (bc, nm)
    Pb = P.reshape(nm, br, bc, bc).transpose(0, 2, 1, 3)
    Qb = Q.reshape(bc, bc, br, nm).transpose(0, 2, 1, 3)

    spec_a = vandermonde_spec(M, "A", p)
    spec_b = vandermonde_spec(M, "B", p)
    VA = vandermonde_matrix(spec_a, p)
    VB = vandermonde_matrix(spec_b, p)
    idx, classes = _support_classes(M)

    # decompose the block-level B'': coefficients are grid contractions with
    # scalar inverse minors, so rearrange blocks behind the contracted axis
    flat_b = np.zeros((pattern_size("B", M), br, bc), np.int64)
    for levels, members in classes.items():
        support = _cols_supported_on(levels, M)
        minor_inv = mod_inv_matrix(VB[support, :], p, counters)
        moved = Pb[members].transpose(0, 2, 3, 1)  # (r, br, bc, grid j)
        coeffs = mod_matmul(moved, minor_inv, p, counters).transpose(0, 3, 1, 2)
        rr = np.repeat(idx[members], len(support))
        cc = np.tile(support, len(members))
        flat_b[pattern_flat_index("B", M, rr, cc)] = coeffs.reshape(-1, br, bc)

    # block-level C := B' * Q * A' (scalar Vandermondes, block entries)
    mid = mod_matmul(VB, Qb.reshape(bc, -1), p, counters).reshape(1 << M, br, bc, nm)
    moved = mid.transpose(0, 2, 3, 1)  # (2^M, bc, nm, grid k)
    mid = mod_matmul(moved, VA, p, counters).transpose(0, 3, 1, 2)  # (2^M, 2^M, bc, nm)
    rows, cols = pattern_positions("C", M)
    flat_c = mid[rows, cols]  # (3^M, bc, nm) blocks

    def block_leaf(a, b):
        # a: (K, D, br, bc), b: (K, D, bc, nm): truncated polynomial product
        # whose coefficient products are batched transposed-algorithm calls
        counters.poly += a.shape[0]
        D = a.shape[1]
        out = np.zeros((a.shape[0], D, a.shape[2], b.shape[3]), np.int64)
        a_deg = [d for d in range(D) if a[:, d].any()]
        b_deg = [d for d in range(D) if b[:, d].any()]
        for d1 in a_deg:
            for d2 in b_deg:
                if d1 + d2 >= D:
                    continue
                out[:, d1 + d2] += algorithm3(a[:, d1], b[:, d2], p, counters)
        return out % p

    D = degree_cap(M)
    wflat = rotated_multiply_flat(
        _flat_with_degree(flat_b, D), _flat_with_degree(flat_c, D), M, p, block_leaf
    )
    wvals = wflat[:, extraction_degree(M)]  # (5^M, br, nm) blocks

    out = np.zeros((nm, br, br, nm), np.int64)  # [grid row, in-block row, grid col, in-block col]
    for levels, members in classes.items():
        support = _rows_with_zero_bits(levels, M)
        m_rep = np.repeat(idx[members], len(support))
        i_til = np.tile(support, len(members))
        gathered = wvals[pattern_flat_index("W", M, m_rep, i_til)]
        gathered = gathered.reshape(len(members), len(support), br, nm)
        minor_inv = mod_inv_matrix(VA[:, support], p, counters)
        moved = gathered.transpose(0, 2, 3, 1)  # (q, br, nm, support k)
        fixed = mod_matmul(moved, minor_inv, p, counters)  # (q, br, nm, grid col)
        out[members] = fixed.transpose(0, 1, 3, 2)
    return out.reshape(nm * br, br * nm)
