"""Weight domain and matrix types for min-plus (tropical) linear algebra.

Weights are non-negative integers up to 2**60 plus a distinguished infinity
``INF``.  Infinity is a real sentinel, never a large number: addition
saturates at INF, and finite additions are guarded against exceeding 2**62.
Matrices are backed by int64 numpy arrays in which -1 encodes INF; the
encoding is internal and public accessors speak ``int | InfinityType``.
"""

from __future__ import annotations

import hashlib

import numpy as np

MAX_INPUT_WEIGHT = 1 << 60
ADD_GUARD = 1 << 62
INF_ENC = -1
_ARGMIN_SENTINEL = (1 << 63) - 1  # larger than any guarded finite sum


class MinPlusError(Exception):
    """Base error for this package."""


class DimensionMismatch(MinPlusError):
    pass


class OverflowGuard(MinPlusError):
    pass


class InfinityType:
    """Singleton absorbing element of (min, +)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INF"

    def __add__(self, other):
        return self

    __radd__ = __add__

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __hash__(self):
        return hash("minplusf2.INF")


INF = InfinityType()


def weight_add(a, b):
    """Saturating, overflow-guarded addition of two weights."""
    if a is INF or b is INF:
        return INF
    s = a + b
    if s > ADD_GUARD:
        raise OverflowGuard(f"finite addition {a} + {b} exceeds 2**62")
    return s


def weight_min(a, b):
    if a is INF:
        return b
    if b is INF:
        return a
    return min(a, b)


def _encode(value, check_range):
    if value is INF:
        return INF_ENC
    if not isinstance(value, (int, np.integer)):
        raise MinPlusError(f"weight must be int or INF, got {value!r}")
    v = int(value)
    if v < 0:
        raise MinPlusError(f"negative weight {v} not allowed")
    if check_range and v > MAX_INPUT_WEIGHT:
        raise OverflowGuard(f"weight {v} exceeds 2**60")
    return v


class WeightMatrix:
    """Rectangular matrix over ([0, 2**60] .. Z) | {INF}, row-major."""

    __slots__ = ("_a",)

    def __init__(self, rows_of_weights, _raw=None):
        if _raw is not None:
            self._a = _raw
            return
        data = [[_encode(v, True) for v in row] for row in rows_of_weights]
        if not data or not data[0]:
            raise MinPlusError("matrix must be non-empty")
        width = len(data[0])
        if any(len(r) != width for r in data):
            raise DimensionMismatch("ragged rows")
        self._a = np.array(data, dtype=np.int64)

    @classmethod
    def _wrap(cls, arr):
        """Internal: adopt an int64 array (-1 = INF) without the 2**60 input bound."""
        return cls(None, _raw=np.asarray(arr, dtype=np.int64))

    @classmethod
    def filled(cls, rows, cols, value=INF):
        return cls._wrap(np.full((rows, cols), _encode(value, True), dtype=np.int64))

    @classmethod
    def identity(cls, n):
        """Min-plus identity: zero diagonal, INF elsewhere."""
        a = np.full((n, n), INF_ENC, dtype=np.int64)
        np.fill_diagonal(a, 0)
        return cls._wrap(a)

    @property
    def rows(self):
        return self._a.shape[0]

    @property
    def cols(self):
        return self._a.shape[1]

    @property
    def shape(self):
        return self._a.shape

    def raw(self):
        """Internal int64 view, -1 encodes INF.  Do not mutate."""
        return self._a

    def inf_mask(self):
        return self._a == INF_ENC

    def __getitem__(self, ij):
        i, j = ij
        v = int(self._a[i, j])
        return INF if v == INF_ENC else v

    def __eq__(self, other):
        return isinstance(other, WeightMatrix) and np.array_equal(self._a, other._a)

    def __repr__(self):
        return f"WeightMatrix({self.rows}x{self.cols})"

    def to_lists(self):
        return [[INF if v == INF_ENC else int(v) for v in row] for row in self._a]

    def max_finite(self):
        """Largest finite entry, or None if every entry is INF."""
        fin = self._a[self._a != INF_ENC]
        return None if fin.size == 0 else int(fin.max())


class WitnessMatrix:
    """Argmin certificate of a min-plus product: 1-based k per finite cell, 0 = absent."""

    __slots__ = ("_k", "inner")

    def __init__(self, k_array, inner):
        self._k = np.asarray(k_array, dtype=np.int64)
        self.inner = inner

    @property
    def shape(self):
        return self._k.shape

    def raw(self):
        return self._k

    def k_at(self, i, j):
        v = int(self._k[i, j])
        return None if v == 0 else v


class SuccessorMatrix:
    """next[i, j] = second node on a shortest i->j path (0-based), -1 = absent."""

    __slots__ = ("_next",)

    def __init__(self, next_array):
        self._next = np.asarray(next_array, dtype=np.int64)

    @property
    def n(self):
        return self._next.shape[0]

    def raw(self):
        return self._next

    def next_hop(self, i, j):
        v = int(self._next[i, j])
        return None if v < 0 else v


def masked_outer_sum(u, v):
    """Outer sums of two int64 weight vectors/columns with INF = -1.

    Returns an int64 array where INF-tainted sums carry the argmin sentinel
    (larger than any guarded finite sum), so min/argmin work directly.
    """
    uinf = u == INF_ENC
    vinf = v == INF_ENC
    s = u[:, None] + v[None, :]
    mask = uinf[:, None] | vinf[None, :]
    return np.where(mask, _ARGMIN_SENTINEL, s)


def sums_to_weights(sums):
    """Convert a sentinel-carrying sum array back to the -1 = INF encoding."""
    return np.where(sums >= _ARGMIN_SENTINEL, np.int64(INF_ENC), sums)


ARGMIN_SENTINEL = _ARGMIN_SENTINEL


# Text format: first line "rows cols", then one line per row of
# whitespace-separated tokens, INF spelled literally.

def format_matrix(m: WeightMatrix) -> str:
    lines = [f"{m.rows} {m.cols}"]
    for row in m.raw():
        lines.append(" ".join("INF" if v == INF_ENC else str(int(v)) for v in row))
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> WeightMatrix:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MinPlusError("empty matrix file")
    try:
        rows, cols = map(int, lines[0].split())
    except ValueError as exc:
        raise MinPlusError(f"bad matrix header {lines[0]!r}") from exc
    if len(lines) != rows + 1:
        raise MinPlusError(f"expected {rows} rows, found {len(lines) - 1}")
    out = []
    for ln in lines[1:]:
        toks = ln.split()
        if len(toks) != cols:
            raise MinPlusError(f"expected {cols} columns, found {len(toks)}")
        out.append([INF if t == "INF" else int(t) for t in toks])
    return WeightMatrix(out)


def save_matrix(m: WeightMatrix, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_matrix(m))


def load_matrix(path) -> WeightMatrix:
    with open(path) as fh:
        return parse_matrix(fh.read())


def matrix_checksum(m: WeightMatrix) -> str:
    return hashlib.sha256(format_matrix(m).encode()).hexdigest()
