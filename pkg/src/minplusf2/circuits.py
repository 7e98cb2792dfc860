"""Executable unbounded-fan-in circuit DAGs: carry-lookahead adder, LEQ
comparator, unique-min and general-min selectors, and the full min-plus
inner-product circuit, all with depth independent of the bit width.

Number encoding: t bits per value, most significant bit first, with the
all-ones string playing infinity; for min-plus inner products t = 3 +
ceil(log2 M) leaves two leading zero bits so finite sums never collide with
the infinity pattern.  XOR is a primitive gate kind; builders that must be
pure AND/OR/NOT (the comparator) expand 1+a+b as (NOT a OR b) AND (a OR NOT b).
Identical subterms are hash-consed, so prefix-equality chains are shared.
"""

from __future__ import annotations

import numpy as np

from .rspoly import ceil_log2
from .weights import MinPlusError

_KINDS = ("INPUT", "CONST", "AND", "OR", "NOT", "XOR")


class CircuitDag:
    """Topologically ordered gate list; gates are (kind, arg indices)."""

    def __init__(self, n_inputs: int):
        self.n_inputs = n_inputs
        self.gates = [("INPUT", (i,)) for i in range(n_inputs)]
        self.outputs: list[int] = []
        self._memo: dict = {}

    def const(self, bit: int) -> int:
        return self._emit("CONST", (int(bit) & 1,))

    def gate(self, kind: str, *args: int) -> int:
        if kind not in ("AND", "OR", "NOT", "XOR"):
            raise MinPlusError(f"unknown gate kind {kind}")
        if kind == "NOT":
            if len(args) != 1:
                raise MinPlusError("NOT takes exactly one input")
            return self._emit("NOT", tuple(args))
        if kind in ("AND", "OR"):
            args = tuple(sorted(set(args)))
            if not args:
                return self.const(1 if kind == "AND" else 0)
        else:
            args = tuple(sorted(args))
            if not args:
                return self.const(0)
        return self._emit(kind, args)

    def _emit(self, kind, args):
        key = (kind, args)
        idx = self._memo.get(key)
        if idx is None:
            idx = len(self.gates)
            self.gates.append(key)
            self._memo[key] = idx
        return idx

    @property
    def gate_count(self) -> int:
        """Logic gates only; inputs and constants are free."""
        return sum(1 for kind, _ in self.gates if kind not in ("INPUT", "CONST"))

    @property
    def depth(self) -> int:
        """Longest input-to-output path counted in logic gates."""
        depths = [0] * len(self.gates)
        for idx, (kind, args) in enumerate(self.gates):
            if kind in ("INPUT", "CONST"):
                depths[idx] = 0
            else:
                depths[idx] = 1 + max(depths[a] for a in args)
        return max((depths[o] for o in self.outputs), default=0)

    def evaluate(self, inputs) -> list[int]:
        return [int(v) for v in self.evaluate_batch(np.asarray([inputs]))[0]]

    def evaluate_batch(self, inputs) -> np.ndarray:
        """Evaluate on a (batch, n_inputs) 0/1 array; returns (batch, n_outputs)."""
        arr = np.asarray(inputs, dtype=np.uint8)
        if arr.ndim != 2 or arr.shape[1] != self.n_inputs:
            raise MinPlusError(
                f"expected (batch, {self.n_inputs}) inputs, got {arr.shape}"
            )
        vals = [None] * len(self.gates)
        batch = arr.shape[0]
        for idx, (kind, args) in enumerate(self.gates):
            if kind == "INPUT":
                vals[idx] = arr[:, args[0]]
            elif kind == "CONST":
                vals[idx] = np.full(batch, args[0], dtype=np.uint8)
            elif kind == "NOT":
                vals[idx] = vals[args[0]] ^ 1
            elif kind == "AND":
                acc = vals[args[0]]
                for a in args[1:]:
                    acc = acc & vals[a]
                vals[idx] = acc
            elif kind == "OR":
                acc = vals[args[0]]
                for a in args[1:]:
                    acc = acc | vals[a]
                vals[idx] = acc
            else:  # XOR
                acc = vals[args[0]]
                for a in args[1:]:
                    acc = acc ^ vals[a]
                vals[idx] = acc
        return np.stack([vals[o] for o in self.outputs], axis=1)


# ---------------------------------------------------------------------------
# builders; bit lists are MSB first throughout

def _adder_gates(dag, xs, ys):
    """t-bit add with discarded carry-out; all-ones (infinity) absorbs."""
    t = len(xs)
    gen = [dag.gate("AND", xs[i], ys[i]) for i in range(t)]
    prop = [dag.gate("XOR", xs[i], ys[i]) for i in range(t)]
    sums = []
    for i in range(t):
        terms = []
        for j in range(i + 1, t):  # carries come from less significant positions
            terms.append(dag.gate("AND", gen[j], *[prop[w] for w in range(i + 1, j)]))
        carry = dag.gate("OR", *terms) if terms else dag.const(0)
        sums.append(dag.gate("XOR", prop[i], carry))
    force = dag.gate("OR", dag.gate("AND", *xs), dag.gate("AND", *ys))
    return [dag.gate("OR", s, force) for s in sums]


def build_adder(t: int) -> CircuitDag:
    """2t inputs (x then y, MSB first), t outputs; constant depth."""
    if t < 1:
        raise MinPlusError("adder needs t >= 1")
    dag = CircuitDag(2 * t)
    dag.outputs = _adder_gates(dag, list(range(t)), list(range(t, 2 * t)))
    return dag


def _leq_gates(dag, xs, ys):
    """[x <= y] as pure AND/OR/NOT: the equality conjunct or some position
    where the prefixes agree, x has 0 and y has 1."""
    t = len(xs)
    eq = [
        dag.gate(
            "AND",
            dag.gate("OR", dag.gate("NOT", xs[i]), ys[i]),
            dag.gate("OR", xs[i], dag.gate("NOT", ys[i])),
        )
        for i in range(t)
    ]
    disjuncts = [dag.gate("AND", *eq)]
    for i in range(t):
        disjuncts.append(
            dag.gate("AND", dag.gate("NOT", xs[i]), ys[i], *eq[:i])
        )
    return dag.gate("OR", *disjuncts)


def build_leq(t: int) -> CircuitDag:
    if t < 1:
        raise MinPlusError("comparator needs t >= 1")
    dag = CircuitDag(2 * t)
    dag.outputs = [_leq_gates(dag, list(range(t)), list(range(t, 2 * t)))]
    return dag


def _min_flags(dag, values):
    """MIN(x_i) = AND_j LEQ(x_i, x_j): true iff x_i is a minimum."""
    d = len(values)
    return [
        dag.gate(
            "AND",
            *[_leq_gates(dag, values[i], values[j]) for j in range(d) if j != i],
        )
        for i in range(d)
    ]


def _select_bits(dag, flags, values):
    """OR_i (flag_i AND value-bit): the bits of the flagged value; all
    flagged values agree, so ties are harmless."""
    t = len(values[0])
    return [
        dag.gate("OR", *[dag.gate("AND", flags[i], values[i][ell]) for i in range(len(values))])
        for ell in range(t)
    ]


def build_min_unique(d: int, t: int) -> CircuitDag:
    """d*t inputs, t outputs: the value of the minimum (value reading of the
    selector; with a unique minimum this is exactly the minimizer's bits)."""
    if d < 1 or t < 1:
        raise MinPlusError("need d >= 1 and t >= 1")
    dag = CircuitDag(d * t)
    values = [list(range(i * t, (i + 1) * t)) for i in range(d)]
    dag.outputs = _select_bits(dag, _min_flags(dag, values), values)
    return dag


def _general_min_index(dag, values):
    """Smallest index attaining the minimum (1-based, MSB-first bits).

    MINBIT maps non-minima to the all-ones index string and each minimum to
    its own index; the value-min over those strings is the answer even with
    ties, since all-ones is never strictly below a real index.
    """
    d = len(values)
    b = max(1, ceil_log2(d + 1))
    flags = _min_flags(dag, values)
    f_strings = []
    for i in range(d):
        idx = i + 1
        bits = []
        for j in range(b):
            if (idx >> (b - 1 - j)) & 1:
                bits.append(dag.const(1))
            else:
                bits.append(dag.gate("NOT", flags[i]))
        f_strings.append(bits)
    return _select_bits(dag, _min_flags(dag, f_strings), f_strings), b


def build_min_general(d: int, t: int) -> CircuitDag:
    """d*t inputs, ceil(log2(d+1)) outputs: smallest minimizing index."""
    if d < 1 or t < 1:
        raise MinPlusError("need d >= 1 and t >= 1")
    dag = CircuitDag(d * t)
    values = [list(range(i * t, (i + 1) * t)) for i in range(d)]
    dag.outputs, _ = _general_min_index(dag, values)
    return dag


def minplus_bit_width(M: int) -> int:
    """3 + ceil(log2 M): two leading zero bits for finite values <= M, plus
    one for the sum; the all-ones string encodes infinity."""
    return 3 + (ceil_log2(M) if M >= 1 else 0)


def build_minplus_inner(d: int, M: int) -> CircuitDag:
    """Min-plus inner product of two length-d vectors with entries in
    [0, M] or infinity; inputs are u then v, each d values of t bits,
    output is the t-bit result (all-ones for infinity)."""
    if d < 1:
        raise MinPlusError("need d >= 1")
    t = minplus_bit_width(M)
    dag = CircuitDag(2 * d * t)
    u = [list(range(i * t, (i + 1) * t)) for i in range(d)]
    v = [list(range((d + i) * t, (d + i + 1) * t)) for i in range(d)]
    sums = [_adder_gates(dag, u[i], v[i]) for i in range(d)]
    istar_bits, b = _general_min_index(dag, sums)
    # select the value of candidate i*: equality of i* with each constant index
    selected = []
    for ell in range(t):
        terms = []
        for i in range(d):
            idx = i + 1
            eq_parts = []
            for j in range(b):
                bit = (idx >> (b - 1 - j)) & 1
                eq_parts.append(istar_bits[j] if bit else dag.gate("NOT", istar_bits[j]))
            terms.append(dag.gate("AND", *eq_parts, sums[i][ell]))
        selected.append(dag.gate("OR", *terms))
    dag.outputs = selected
    return dag


def encode_value(v, t: int) -> list[int]:
    """Value in [0, 2^t - 2] or INF (None) as an MSB-first bit list."""
    if v is None:
        return [1] * t
    return [(v >> (t - 1 - i)) & 1 for i in range(t)]


def decode_value(bits) -> int | None:
    """Inverse of encode_value: all-ones decodes to None (infinity)."""
    if all(bits):
        return None
    return int("".join(str(int(b)) for b in bits), 2)
