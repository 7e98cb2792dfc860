"""Randomized F2 polynomial machinery for rank-comparison circuits.

The goal is the output-bit expression: for candidates k in 1..d whose
ell-th bit is 1, an approximate AND over d rank comparisons decides whether
k dominates, and the XOR of those ANDs yields the ell-th bit of the winning
candidate.  Wide ANDs are replaced by the one-sided random-parity
approximator E; each comparison LEQ(a, b) is an XOR of t+1 ANDs whose
factors are XORs of at most 3 bits, and those ANDs get the same treatment
with width ep.  After factoring every AND input into (constant XOR
row-parity XOR column-parity), the whole expression expands to a canonical
multilinear polynomial over precomputed row/column parity variables.

Rank values live in {1..2^t} and are encoded as the t-bit string of
value-1, most significant bit first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._derive import derive_bits
from .fredman import RankedPairMatrices
from .weights import MinPlusError

DEFAULT_MONOMIAL_CAP = 1 << 24


class BudgetExceeded(MinPlusError):
    """Raised when the expansion bound for the chosen parameters is over the cap."""


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ValueError("ceil_log2 needs a positive argument")
    return (x - 1).bit_length()


@dataclass
class RsParameters:
    """Dimensions and approximator widths.

    t is the rank bit width; e the outer AND-approximator width (default
    2 + ceil(log2 d)); ep the inner LEQ approximator width (default
    3 + 2*ceil(log2 d) + ceil(log2 t)).  Both are overridable for
    desk-scale demos.
    """

    n: int
    d: int
    t: int
    e: int
    ep: int
    seed: int = 0

    @property
    def bit_positions(self) -> int:
        """Number of candidate-index bits; k in {1..d} needs ceil(log2(d+1))."""
        return ceil_log2(self.d + 1)


def rs_parameters(n_rows, d, n_cols=None, seed=0, e=None, ep=None) -> RsParameters:
    if n_cols is None:
        n_cols = n_rows
    t = max(1, ceil_log2(n_rows + n_cols))
    cld = ceil_log2(d) if d > 1 else 0
    if e is None:
        e = 2 + cld
    if ep is None:
        ep = 3 + 2 * cld + ceil_log2(t) if t > 1 else 3 + 2 * cld
    return RsParameters(n=n_rows, d=d, t=t, e=e, ep=ep, seed=seed)


@dataclass
class RandomBits:
    """All randomness for one (seed, block, repetition, ell) tuple.

    outer[k-1, s, :] are the parity-selection bits of approximator row s of
    the E instance guarding candidate k.  The inner LEQ approximator is
    stored pre-factored: for AND i (i = 0 equality term, i = 1..t the
    strict terms) and row q, the factor is
    kappa[i, q] XOR parity(a-bits & amask[i, q]) XOR parity(b-bits & bmask[i, q]).
    """

    t: int
    ep: int
    outer: np.ndarray  # (d, e, d) uint8
    amask: np.ndarray  # (t+1, ep, t) uint8
    bmask: np.ndarray  # (t+1, ep, t) uint8
    kappa: np.ndarray  # (t+1, ep) uint8
    raw_inner: np.ndarray = field(repr=False, default=None)  # (t+1, ep, t+1)


def _masks_from_raw(raw: np.ndarray, t: int, ep: int):
    amask = np.zeros((t + 1, ep, t), dtype=np.uint8)
    bmask = np.zeros((t + 1, ep, t), dtype=np.uint8)
    kappa = np.ones((t + 1, ep), dtype=np.uint8)
    # AND 0: factors (1 + a_j + b_j) for j = 1..t; every factor constant is 1.
    amask[0] = raw[0, :, :t]
    bmask[0] = raw[0, :, :t]
    for i in range(1, t + 1):
        # factor order: (1 + a_i), b_i, then the prefix (1 + a_j + b_j), j < i
        amask[i, :, i - 1] = raw[i, :, 0]
        bmask[i, :, i - 1] = raw[i, :, 1]
        kappa[i] = 1 ^ raw[i, :, 1]
        if i > 1:
            amask[i, :, : i - 1] = raw[i, :, 2 : i + 1]
            bmask[i, :, : i - 1] = raw[i, :, 2 : i + 1]
    return amask, bmask, kappa


def derive_random_bits(params: RsParameters, block, rep, ell) -> RandomBits:
    """Counter-based draw, bit-identical for a fixed (seed, block, rep, ell)."""
    t, ep, d, e = params.t, params.ep, params.d, params.e
    n_outer = d * e * d
    n_inner = (t + 1) * ep * (t + 1)
    flat = derive_bits(n_outer + n_inner, "rsbits", params.seed, block, rep, ell)
    outer = flat[:n_outer].reshape(d, e, d)
    raw = flat[n_outer:].reshape(t + 1, ep, t + 1)
    amask, bmask, kappa = _masks_from_raw(raw, t, ep)
    return RandomBits(t=t, ep=ep, outer=outer, amask=amask, bmask=bmask,
                      kappa=kappa, raw_inner=raw)


# ---------------------------------------------------------------------------
# Reference circuit evaluations (bit level, unexpanded)

def value_bits(v: int, t: int) -> np.ndarray:
    """Bits of v-1 for v in {1..2^t}, MSB first."""
    if not 1 <= v <= (1 << t):
        raise ValueError(f"value {v} outside [1, 2^{t}]")
    x = v - 1
    return np.array([(x >> (t - 1 - i)) & 1 for i in range(t)], dtype=np.uint8)


def approximate_and(y, r) -> int:
    """E(y_1..y_d) = AND_s (1 + XOR_j r[s,j]*(y_j + 1)).

    One-sided: equals 1 with certainty when AND(y) = 1, and equals AND(y)
    with probability >= 1 - 2^-e over r otherwise.
    """
    y = np.asarray(y, dtype=np.uint8)
    r = np.asarray(r, dtype=np.uint8)
    if r.ndim != 2 or r.shape[1] != y.shape[0]:
        raise MinPlusError(f"approximator shape {r.shape} does not match |y|={y.shape[0]}")
    if r.shape[0] == 0:
        return 1
    flips = (r & (y ^ 1)[None, :]).sum(axis=1) & 1
    return int((flips == 0).all())


def leq_reference(a: int, b: int, t: int) -> int:
    """Exact bitwise comparator: XOR of the equality AND and the t strict ANDs."""
    ab = value_bits(a, t)
    bb = value_bits(b, t)
    eq = 1 ^ ab ^ bb
    acc = int(eq.all())
    for i in range(t):
        term = (1 ^ ab[i]) & bb[i] & (int(eq[:i].all()) if i else 1)
        acc ^= int(term)
    return acc


def leq_prime_value(bits: RandomBits, a: int, b: int) -> int:
    """Direct (unexpanded) evaluation of the randomized comparator LEQ'."""
    t = bits.t
    ab = value_bits(a, t)
    bb = value_bits(b, t)
    u = (bits.amask @ ab) & 1  # (t+1, ep)
    v = (bits.bmask @ bb) & 1
    factors = bits.kappa ^ u ^ v
    return int((factors.min(axis=1) if bits.ep else np.ones(t + 1, np.uint8)).sum() & 1)


def pbit_value(params: RsParameters, bits: RandomBits, app_row, bpp_col, ell: int) -> int:
    """Direct evaluation of the randomized output-bit expression for one (i, j).

    app_row / bpp_col are the d*d slot rank values for row i of A'' and
    column j of B''; ell is 1-based.
    """
    d = params.d
    leq = np.empty(d * d, dtype=np.uint8)
    for s in range(d * d):
        leq[s] = leq_prime_value(bits, int(app_row[s]), int(bpp_col[s]))
    acc = 0
    for k in range(1, d + 1):
        if not (k >> (ell - 1)) & 1:
            continue
        vals = leq[(k - 1) * d : k * d]
        acc ^= approximate_and(vals, bits.outer[k - 1])
    return acc


# ---------------------------------------------------------------------------
# Canonical sparse polynomials over F2

class SparseF2Polynomial:
    """Multilinear F2 polynomial whose monomials pair a set of row-variable
    indices with a set of column-variable indices; duplicates cancel mod 2
    at construction time and the empty monomial lives in ``constant``."""

    __slots__ = ("monomials", "constant")

    def __init__(self, monomials=(), constant=0):
        self.monomials = frozenset(monomials)
        self.constant = int(constant) & 1

    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def one(cls):
        return cls(constant=1)

    @classmethod
    def row_variable(cls, idx):
        return cls(monomials={((idx,), ())})

    @classmethod
    def col_variable(cls, idx):
        return cls(monomials={((), (idx,))})

    @property
    def monomial_count(self):
        return len(self.monomials) + (1 if self.constant else 0)

    def __eq__(self, other):
        return (
            isinstance(other, SparseF2Polynomial)
            and self.constant == other.constant
            and self.monomials == other.monomials
        )

    def __hash__(self):
        return hash((self.constant, self.monomials))

    def xor(self, other):
        return SparseF2Polynomial(
            self.monomials ^ other.monomials, self.constant ^ other.constant
        )

    def _terms(self):
        if self.constant:
            yield ((), ())
        yield from self.monomials

    def multiply(self, other):
        """Product with multilinearization (x^2 = x) and mod-2 cancellation."""
        acc = {}
        for r1, c1 in self._terms():
            s1r, s1c = set(r1), set(c1)
            for r2, c2 in other._terms():
                key = (tuple(sorted(s1r.union(r2))), tuple(sorted(s1c.union(c2))))
                if key in acc:
                    del acc[key]
                else:
                    acc[key] = None
        const = 1 if ((), ()) in acc else 0
        acc.pop(((), ()), None)
        return SparseF2Polynomial(acc.keys(), const)

    def shift(self, row_offset, col_offset):
        return SparseF2Polynomial(
            {
                (tuple(r + row_offset for r in rs), tuple(c + col_offset for c in cs))
                for rs, cs in self.monomials
            },
            self.constant,
        )

    def evaluate(self, row_bits, col_bits) -> int:
        row_bits = np.asarray(row_bits)
        col_bits = np.asarray(col_bits)
        acc = self.constant
        for rs, cs in self.monomials:
            if all(row_bits[r] for r in rs) and all(col_bits[c] for c in cs):
                acc ^= 1
        return acc

    def sorted_monomials(self):
        return sorted(self.monomials)

    def serialize(self, header=None) -> str:
        lines = []
        if header:
            kv = " ".join(f"{k}={v}" for k, v in header.items())
            lines.append(f"# minplusf2-poly v1 {kv}")
        lines.append(f"constant {self.constant}")
        for rs, cs in self.sorted_monomials():
            lines.append(
                "R" + ",".join(map(str, rs)) + ";C" + ",".join(map(str, cs))
            )
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "SparseF2Polynomial":
        constant = 0
        monos = set()
        for ln in text.splitlines():
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            if ln.startswith("constant"):
                constant = int(ln.split()[1])
                continue
            rpart, cpart = ln.split(";")
            rs = tuple(int(x) for x in rpart[1:].split(",") if x)
            cs = tuple(int(x) for x in cpart[1:].split(",") if x)
            monos.add((rs, cs))
        return cls(monos, constant)


def poly_product(factors):
    acc = SparseF2Polynomial.one()
    for f in factors:
        acc = acc.multiply(f)
    return acc


# ---------------------------------------------------------------------------
# Expansion builders

def build_leq_prime(params: RsParameters, bits: RandomBits) -> SparseF2Polynomial:
    """Expanded LEQ' for a single comparison, over the (t+1)*ep preprocessed
    parity variables u_{i,q} (rows) and v_{i,q} (columns), index i*ep+q.

    Expansion is exact: evaluating the polynomial on preprocessed variables
    equals the direct LEQ' circuit on every input.  At most (t+1)*3^ep
    monomials before cancellation.
    """
    t, ep = params.t, params.ep
    acc = SparseF2Polynomial.zero()
    for i in range(t + 1):
        factors = []
        for q in range(ep):
            idx = i * ep + q
            f = SparseF2Polynomial(
                {((idx,), ()), ((), (idx,))}, int(bits.kappa[i, q])
            )
            factors.append(f)
        acc = acc.xor(poly_product(factors))
    return acc


def expansion_budget(params: RsParameters) -> int:
    """Pre-Eq.(3) monomial bound d*((d+1)*m')^e at the chosen widths,
    with m' = (t+1)*3^ep."""
    m_prime = (params.t + 1) * 3**params.ep
    return params.d * ((params.d + 1) * m_prime) ** params.e


def budget_log2(d: int, t: int) -> float:
    """log2 of the Eq.(3) monomial bound at default widths, ceiling logs on
    the parameter logs and exact log2(3) on the width multiplier."""
    cld = ceil_log2(d) if d >= 1 else 0
    clt = ceil_log2(t) if t >= 1 else 0
    return (1 + cld) * (
        ceil_log2(d + 1) + ceil_log2(t + 1) + math.log2(3) * (3 + 2 * cld + clt)
    )


def monomial_budget(params: RsParameters) -> int:
    """The Eq.(3) bound as an integer; feeds the budget <= n^0.1 feasibility check."""
    return math.ceil(2 ** budget_log2(params.d, params.t))


def budget_feasible(d: int, t: int, log2_n: float) -> bool:
    """Whether the Eq.(3) bound falls below n^0.1 for matrices of height 2^log2_n."""
    return budget_log2(d, t) <= 0.1 * log2_n


def build_output_bit_polynomial(
    params: RsParameters, bits: RandomBits, ell: int, cap: int = DEFAULT_MONOMIAL_CAP
) -> SparseF2Polynomial:
    """Fully expanded randomized expression for output bit ell (1-based).

    One polynomial serves every (i, j); only the preprocessed variable
    values differ.  Refuses when the expansion bound exceeds ``cap`` --
    callers must fall back to direct evaluation.
    """
    bound = expansion_budget(params)
    if bound > cap:
        raise BudgetExceeded(
            f"expansion bound {bound} (= d*((d+1)*m')^e at d={params.d}, "
            f"t={params.t}, e={params.e}, ep={params.ep}) exceeds cap {cap}"
        )
    if not 1 <= ell <= params.bit_positions:
        raise MinPlusError(f"bit position {ell} outside 1..{params.bit_positions}")
    d, t, ep = params.d, params.t, params.ep
    stride = (t + 1) * ep
    base = build_leq_prime(params, bits)
    slot_cache = {}

    def slot_poly(k, k2):
        s = (k - 1) * d + (k2 - 1)
        if s not in slot_cache:
            slot_cache[s] = base.shift(s * stride, s * stride)
        return slot_cache[s]

    acc = SparseF2Polynomial.zero()
    for k in range(1, d + 1):
        if not (k >> (ell - 1)) & 1:
            continue
        factors = []
        for s in range(params.e):
            row = bits.outer[k - 1, s]
            f = SparseF2Polynomial(constant=1 ^ (int(row.sum()) & 1))
            for k2 in range(1, d + 1):
                if row[k2 - 1]:
                    f = f.xor(slot_poly(k, k2))
            factors.append(f)
        acc = acc.xor(poly_product(factors))
    return acc


# ---------------------------------------------------------------------------
# Matrix preprocessing

@dataclass
class PreprocessedVariables:
    """Parity variables a'_S / b'_T for every row, column, and slot.

    row[i, s, w, q] is the parity of the selected bits of rank A''[i, slot s]
    under mask (w, q); col likewise for B''.  Flat layouts follow the
    polynomial variable indexing slot*stride + w*ep + q.
    """

    row: np.ndarray  # (n, d2, t+1, ep) uint8
    col: np.ndarray  # (m, d2, t+1, ep) uint8

    def row_flat(self):
        return self.row.reshape(self.row.shape[0], -1)

    def col_flat(self):
        return self.col.reshape(self.col.shape[0], -1)


def rank_bits(values: np.ndarray, t: int) -> np.ndarray:
    """Bits of (value - 1) along a trailing axis of width t, MSB first."""
    shifts = np.arange(t - 1, -1, -1, dtype=np.int64)
    return (((values - 1)[..., None] >> shifts) & 1).astype(np.uint8)


def preprocess_xors(ranked: RankedPairMatrices, bits: RandomBits) -> PreprocessedVariables:
    t = bits.t
    if ranked.rank_count > (1 << t):
        raise MinPlusError(f"rank {ranked.rank_count} does not fit in {t} bits")
    abits = rank_bits(ranked.app, t)          # (n, d2, t)
    bbits = rank_bits(ranked.bpp.T, t)        # (m, d2, t)
    row = np.einsum("nst,wqt->nswq", abits, bits.amask, dtype=np.int64) & 1
    col = np.einsum("mst,wqt->mswq", bbits, bits.bmask, dtype=np.int64) & 1
    return PreprocessedVariables(row.astype(np.uint8), col.astype(np.uint8))
