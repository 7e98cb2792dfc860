"""Randomized rectangular min-plus product and its blocked n x n extension.

Pipeline per n x d by d x m block: surrogate INF, perturb so argmins are
unique and equal the smallest original argmin, take Fredman differences,
compress to ranks, then recover each output's winning candidate k* bit by
bit: the randomized rank-comparison expression is evaluated for every pair
over `reps` independent repetitions and each bit is the per-cell majority.
The output value is recomputed from the original weights at k*, so a voted
entry is either exactly right or points at a non-minimal candidate; the
optional verify pass makes the result exact by direct scan and counts how
many entries it had to fix.

Two evaluation modes share the same random bits and are bit-identical where
both run: "direct" evaluates the unexpanded expression with word-packed
bitwise kernels (any parameters), "expanded" builds the canonical
polynomial and evaluates it as a pair of rectangular F2 matrix products
(small parameters only; the expansion bound is checked against a cap).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exact import minplus_product_naive
from .f2eval import evaluate_all_pairs
from .fredman import difference_matrices, perturb, rank_replace, replace_infinite
from .rspoly import (
    DEFAULT_MONOMIAL_CAP,
    RsParameters,
    build_output_bit_polynomial,
    ceil_log2,
    derive_random_bits,
    preprocess_xors,
    rank_bits,
    rs_parameters,
)
from .weights import (
    ARGMIN_SENTINEL,
    DimensionMismatch,
    INF_ENC,
    MinPlusError,
    WeightMatrix,
    WitnessMatrix,
)


def default_reps(n: int) -> int:
    """Majority amplification count 18*ceil(log2 n) (c = 18)."""
    return 18 * max(1, ceil_log2(max(2, n)))


@dataclass
class FastProductConfig:
    d: int
    reps: int | None = None
    e: int | None = None
    ep: int | None = None
    seed: int = 0
    mode: str = "direct"  # "direct" | "expanded"
    budget_cap: int = DEFAULT_MONOMIAL_CAP
    verify: bool = False
    threads: int = 1

    def params_for(self, n_rows, n_cols) -> RsParameters:
        return rs_parameters(
            n_rows, self.d, n_cols=n_cols, seed=self.seed, e=self.e, ep=self.ep
        )


@dataclass
class ProductStats:
    entries: int = 0
    fallback_entries: int = 0
    invalid_kstar: int = 0
    rect_products: int = 0
    tallies: list = field(default_factory=list)
    collect_tallies: bool = False


# ---------------------------------------------------------------------------
# packing helpers (columns -> uint64 words, LSB first)

def pack_cols(bits: np.ndarray) -> np.ndarray:
    """0/1 uint8 (..., m) -> (..., ceil(m/64)) uint64, LSB-first."""
    packed = np.packbits(bits, axis=-1, bitorder="little")
    pad = (-packed.shape[-1]) % 8
    if pad:
        packed = np.concatenate(
            [packed, np.zeros(packed.shape[:-1] + (pad,), np.uint8)], axis=-1
        )
    return np.ascontiguousarray(packed).view(np.uint64)


def unpack_cols(words: np.ndarray, m: int) -> np.ndarray:
    as_bytes = np.ascontiguousarray(words).view(np.uint8)
    return np.unpackbits(as_bytes, axis=-1, bitorder="little")[..., :m]


def _as_masks(bits_arr: np.ndarray) -> np.ndarray:
    """0/1 array -> uint64 masks (0 or all-ones)."""
    return np.uint64(0) - bits_arr.astype(np.uint64)


def candidate_set(ell: int, d: int):
    """Candidates k in 1..d whose ell-th bit (1-based, LSB = bit 1) is set."""
    return [k for k in range(1, d + 1) if (k >> (ell - 1)) & 1]


# ---------------------------------------------------------------------------
# direct-circuit evaluation, word-packed over output columns

def _direct_bits(params, bits_list, abits, bbits, ell, m):
    """Evaluate the output-bit expression for a batch of repetitions.

    bits_list holds one RandomBits per repetition; returns (R, n, m) uint8.
    """
    d, t, ep, e = params.d, params.t, params.ep, params.e
    d2 = d * d
    n = abits.shape[0]
    width = (m + 63) // 64
    n_reps = len(bits_list)
    amask = np.stack([b.amask for b in bits_list])  # (R, t+1, ep, t)
    bmask = np.stack([b.bmask for b in bits_list])
    kappa = np.stack([b.kappa for b in bits_list])  # (R, t+1, ep)
    outer = np.stack([b.outer for b in bits_list])  # (R, d, e, d)

    def parities(value_bits, masks, rows):
        # (rows, d2, t) x (R, t+1, ep, t) -> (R, rows, d2, t+1, ep); the
        # uint8 matmul wraps mod 256, which preserves the parity bit
        flat = value_bits.reshape(rows * d2, t) @ masks.reshape(-1, t).T
        return (flat & 1).reshape(rows, d2, n_reps, t + 1, ep).transpose(2, 0, 1, 3, 4)

    u = parities(abits, amask, n)
    v = parities(bbits, bmask, bbits.shape[0])
    vp = pack_cols(np.ascontiguousarray(np.moveaxis(v, 1, -1)))  # (R, d2, t+1, ep, W)
    umask = _as_masks(u)  # (R, n, d2, t+1, ep)
    kmask = _as_masks(kappa)  # (R, t+1, ep)

    f = (
        umask[:, :, :, :, :, None]
        ^ vp[:, None, :, :, :, :]
        ^ kmask[:, None, None, :, :, None]
    )  # (R, n, d2, t+1, ep, W)
    if ep:
        anded = np.bitwise_and.reduce(f, axis=4)  # (R, n, d2, t+1, W)
    else:
        anded = np.full(
            f.shape[:4] + (width,), np.uint64(0xFFFFFFFFFFFFFFFF), dtype=np.uint64
        )
    leq = np.bitwise_xor.reduce(anded, axis=3)  # (R, n, d2, W)

    full = np.uint64(0xFFFFFFFFFFFFFFFF)
    out = np.zeros((len(bits_list), n, width), dtype=np.uint64)
    for k in candidate_set(ell, d):
        acc = np.full_like(out, full)
        for s in range(e):
            sel = outer[:, k - 1, s, :]  # (R, d)
            par = np.zeros_like(out)
            for k2 in range(1, d + 1):
                mask = _as_masks(sel[:, k2 - 1])[:, None, None]
                par ^= mask & leq[:, :, (k - 1) * d + (k2 - 1), :]
            const = 1 ^ (sel.sum(axis=1) & 1)  # (R,)
            par ^= _as_masks(const)[:, None, None]
            acc &= par
        out ^= acc
    return unpack_cols(out, m)


def _expanded_bits(params, bits, ranked, ell, cap):
    """Single-repetition evaluation via the expanded polynomial and two
    rectangular F2 products; bit-identical to the direct route."""
    poly = build_output_bit_polynomial(params, bits, ell, cap=cap)
    pre = preprocess_xors(ranked, bits)
    return evaluate_all_pairs(poly, pre.row_flat(), pre.col_flat()).to_dense()


def _rep_chunks(reps, n, m, params):
    cells = n * params.d**2 * (params.t + 1) * max(1, params.ep) * ((m + 63) // 64)
    chunk = max(1, (4 << 20) // max(1, cells))
    return [range(r0, min(reps, r0 + chunk)) for r0 in range(0, reps, chunk)]


def _vote(ranked, params, cfg, reps, block, n_bits):
    """Tally 1-votes for every (ell, i, j) across repetitions."""
    n, m = ranked.rows, ranked.cols
    abits = rank_bits(ranked.app, params.t)
    bbits = rank_bits(ranked.bpp.T, params.t)
    votes = np.zeros((n_bits, n, m), dtype=np.int32)

    def run_chunk(chunk):
        part = np.zeros_like(votes)
        for ell in range(1, n_bits + 1):
            if cfg.mode == "expanded":
                for rep in chunk:
                    bits = derive_random_bits(params, block, rep, ell)
                    part[ell - 1] += _expanded_bits(
                        params, bits, ranked, ell, cfg.budget_cap
                    )
            else:
                bits_list = [
                    derive_random_bits(params, block, rep, ell) for rep in chunk
                ]
                part[ell - 1] += _direct_bits(
                    params, bits_list, abits, bbits, ell, m
                ).sum(axis=0, dtype=np.int32)
        return part

    chunks = _rep_chunks(reps, n, m, params)
    if cfg.threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            for part in pool.map(run_chunk, chunks):
                votes += part
    else:
        for chunk in chunks:
            votes += run_chunk(chunk)
    return votes


# ---------------------------------------------------------------------------
# products

def _scan_cells(a_raw, b_raw, ii, jj):
    """Exact min/argmin over k for the given cells; returns (dist, kstar)."""
    lhs = a_raw[ii, :]  # (cells, d)
    rhs = b_raw[:, jj].T  # (cells, d)
    mask = (lhs == INF_ENC) | (rhs == INF_ENC)
    sums = np.where(mask, ARGMIN_SENTINEL, lhs + rhs)
    k0 = sums.argmin(axis=1)
    best = np.take_along_axis(sums, k0[:, None], axis=1)[:, 0]
    dist = np.where(best >= ARGMIN_SENTINEL, np.int64(INF_ENC), best)
    wit = np.where(best >= ARGMIN_SENTINEL, 0, k0 + 1)
    return dist, wit


def _values_at(a_raw, b_raw, kstar):
    """C[i,j] = A[i, k*[i,j]] + B[k*[i,j], j] on original weights, INF where
    either operand is INF."""
    n, m = kstar.shape
    k0 = kstar - 1
    av = a_raw[np.arange(n)[:, None], k0]
    bv = b_raw[k0, np.arange(m)[None, :]]
    inf = (av == INF_ENC) | (bv == INF_ENC)
    return np.where(inf, np.int64(INF_ENC), av + bv)


def rect_minplus_fast(A: WeightMatrix, B: WeightMatrix, cfg: FastProductConfig,
                      block=0, stats: ProductStats | None = None):
    """Randomized n x d by d x m min-plus product with witnesses.

    Correct per entry with probability 1 - exp(-Omega(reps)) once the
    per-repetition bit accuracy exceeds 1/2; cfg.verify makes it exact and
    counts fixed entries in ``stats``.
    """
    if A.cols != cfg.d or B.rows != cfg.d:
        raise DimensionMismatch(f"block width {cfg.d} vs {A.cols}/{B.rows}")
    n, m, d = A.rows, B.cols, cfg.d
    if stats is None:
        stats = ProductStats()
    stats.rect_products += 1
    stats.entries += n * m
    a_raw, b_raw = A.raw(), B.raw()

    if d == 1:
        dist = _values_at(a_raw, b_raw, np.ones((n, m), dtype=np.int64))
        wit = np.where(dist == INF_ENC, 0, 1)
        return WeightMatrix._wrap(dist), WitnessMatrix(wit, d)

    asur, bsur, _ = replace_infinite(A, B)
    pair = perturb(WeightMatrix._wrap(asur), WeightMatrix._wrap(bsur))
    ranked = rank_replace(*difference_matrices(pair))
    params = cfg.params_for(n, m)
    reps = cfg.reps if cfg.reps is not None else default_reps(max(n, m))
    n_bits = params.bit_positions

    votes = _vote(ranked, params, cfg, reps, block, n_bits)
    if stats.collect_tallies:
        stats.tallies.append((votes.copy(), reps))
    bits = (2 * votes > reps).astype(np.int64)
    kstar = np.zeros((n, m), dtype=np.int64)
    for ell in range(n_bits):
        kstar += bits[ell] << ell

    bad = (kstar < 1) | (kstar > d)
    if bad.any():
        ii, jj = np.nonzero(bad)
        stats.invalid_kstar += len(ii)
        stats.fallback_entries += len(ii)
        kstar[bad] = 1  # placeholder; overwritten below
        dist = _values_at(a_raw, b_raw, kstar)
        fix_dist, fix_wit = _scan_cells(a_raw, b_raw, ii, jj)
        dist[ii, jj] = fix_dist
        wit = np.where(dist == INF_ENC, 0, kstar)
        wit[ii, jj] = fix_wit
    else:
        dist = _values_at(a_raw, b_raw, kstar)
        wit = np.where(dist == INF_ENC, 0, kstar)

    if cfg.verify:
        ii, jj = np.nonzero(np.ones((n, m), dtype=bool))
        true_dist, true_wit = _scan_cells(a_raw, b_raw, ii.ravel(), jj.ravel())
        true_dist = true_dist.reshape(n, m)
        true_wit = true_wit.reshape(n, m)
        wrong = true_dist != dist
        stats.fallback_entries += int(wrong.sum())
        dist = np.where(wrong, true_dist, dist)
        wit = np.where(wrong, true_wit, wit)

    return WeightMatrix._wrap(dist), WitnessMatrix(wit, d)


def minplus_product_fast(A: WeightMatrix, B: WeightMatrix, cfg: FastProductConfig,
                         stats: ProductStats | None = None, stream=0):
    """n x n (or n x K x m) product by decomposing into width-d blocks,
    padding the inner dimension with INF, and taking entrywise minima with
    the smallest global witness."""
    if A.cols != B.rows:
        raise DimensionMismatch(f"inner dims {A.cols} != {B.rows}")
    n, K, m = A.rows, A.cols, B.cols
    d = cfg.d
    blocks = (K + d - 1) // d
    pad = blocks * d - K
    a = A.raw()
    b = B.raw()
    if pad:
        a = np.concatenate([a, np.full((n, pad), INF_ENC, np.int64)], axis=1)
        b = np.concatenate([b, np.full((pad, m), INF_ENC, np.int64)], axis=0)

    best = np.full((n, m), ARGMIN_SENTINEL, dtype=np.int64)
    wit = np.zeros((n, m), dtype=np.int64)
    for blk in range(blocks):
        Ab = WeightMatrix._wrap(a[:, blk * d : (blk + 1) * d])
        Bb = WeightMatrix._wrap(b[blk * d : (blk + 1) * d, :])
        Cb, Wb = rect_minplus_fast(Ab, Bb, cfg, block=(stream, blk), stats=stats)
        cb = np.where(Cb.raw() == INF_ENC, ARGMIN_SENTINEL, Cb.raw())
        better = cb < best
        best = np.where(better, cb, best)
        wit = np.where(better, Wb.raw() + blk * d, wit)
    dist = np.where(best >= ARGMIN_SENTINEL, np.int64(INF_ENC), best)
    return WeightMatrix._wrap(dist), WitnessMatrix(wit, K)


def fast_product_strategy(cfg: FastProductConfig, stats: ProductStats | None = None):
    """A (A, B) -> (C, witness) strategy for apsp_by_squaring; each call gets
    a fresh derivation stream so squarings use independent randomness."""
    counter = {"calls": 0}

    def product(A, B):
        stream = counter["calls"]
        counter["calls"] += 1
        return minplus_product_fast(A, B, cfg, stats=stats, stream=stream)

    return product


def measure_per_entry_accuracy(A: WeightMatrix, B: WeightMatrix,
                               cfg: FastProductConfig, samples: int, block=0):
    """Fraction of (i, j, ell, repetition) tuples whose evaluated bit equals
    the true bit of the smallest argmin, measured in direct-circuit mode.

    Cells whose every sum is INF have no argmin and are excluded.
    """
    n, m, d = A.rows, B.cols, cfg.d
    if d < 2:
        raise MinPlusError("accuracy measurement needs d >= 2")
    _, wit_true = minplus_product_naive(A, B)
    ktrue = wit_true.raw()
    valid = ktrue > 0

    asur, bsur, _ = replace_infinite(A, B)
    pair = perturb(WeightMatrix._wrap(asur), WeightMatrix._wrap(bsur))
    ranked = rank_replace(*difference_matrices(pair))
    params = cfg.params_for(n, m)
    n_bits = params.bit_positions
    abits = rank_bits(ranked.app, params.t)
    bbits = rank_bits(ranked.bpp.T, params.t)

    agree = 0
    count = 0
    rep = 0
    while count < samples:
        for ell in range(1, n_bits + 1):
            bits = derive_random_bits(params, block, rep, ell)
            got = _direct_bits(params, [bits], abits, bbits, ell, m)[0]
            want = (ktrue >> (ell - 1)) & 1
            agree += int((got[valid] == want[valid]).sum())
            count += int(valid.sum())
        rep += 1
    return agree / count
