import numpy as np

from minplusf2.f2eval import (
    WORD_OPS,
    BitMatrix,
    build_evaluation_matrices,
    evaluate_all_pairs,
    f2_multiply,
)
from minplusf2.rspoly import SparseF2Polynomial

from helpers import rng_for


def triple_loop_f2(x, y):
    n, k = x.shape
    m = y.shape[1]
    z = np.zeros((n, m), dtype=np.uint8)
    for i in range(n):
        for j in range(m):
            acc = 0
            for kk in range(k):
                acc ^= x[i, kk] & y[kk, j]
            z[i, j] = acc
    return z


def random_poly(rng, n_row_vars, n_col_vars, n_monomials):
    monos = set()
    while len(monos) < n_monomials:
        r = tuple(sorted(rng.choice(n_row_vars, size=rng.integers(0, 4), replace=False)))
        c = tuple(sorted(rng.choice(n_col_vars, size=rng.integers(0, 4), replace=False)))
        if r or c:
            monos.add((tuple(int(v) for v in r), tuple(int(v) for v in c)))
    return SparseF2Polynomial(monos, constant=int(rng.integers(0, 2)))


def test_pack_unpack_round_trip():
    rng = rng_for(3)
    for rows, cols in ((1, 1), (3, 64), (5, 65), (7, 200)):
        dense = rng.integers(0, 2, size=(rows, cols)).astype(np.uint8)
        bm = BitMatrix.from_dense(dense)
        assert bm.padding_ok()
        assert np.array_equal(bm.to_dense(), dense)


def test_multiply_identity():
    rng = rng_for(5)
    y = BitMatrix.from_dense(rng.integers(0, 2, size=(20, 70)).astype(np.uint8))
    z = f2_multiply(BitMatrix.identity(20), y)
    assert z == y


def test_multiply_parity_cancellation():
    ones = BitMatrix.from_dense(np.ones((2, 2), dtype=np.uint8))
    z = f2_multiply(ones, ones)
    assert not z.words.any()


def test_multiply_matches_triple_loop():
    rng = rng_for(7)
    xd = rng.integers(0, 2, size=(100, 37)).astype(np.uint8)
    yd = rng.integers(0, 2, size=(37, 100)).astype(np.uint8)
    z = f2_multiply(BitMatrix.from_dense(xd), BitMatrix.from_dense(yd))
    assert np.array_equal(z.to_dense(), triple_loop_f2(xd, yd))


def test_multiply_associative_and_distributive():
    rng = rng_for(11)
    for _ in range(5):
        a, b, c = (
            BitMatrix.from_dense(rng.integers(0, 2, size=(20, 20)).astype(np.uint8))
            for _ in range(3)
        )
        assert f2_multiply(f2_multiply(a, b), c) == f2_multiply(a, f2_multiply(b, c))
        assert f2_multiply(a, b.xor(c)) == f2_multiply(a, b).xor(f2_multiply(a, c))


def test_word_op_count_within_2x():
    rng = rng_for(13)
    n, m = 96, 50
    x = BitMatrix.from_dense(rng.integers(0, 2, size=(n, m)).astype(np.uint8))
    y = BitMatrix.from_dense(rng.integers(0, 2, size=(m, n)).astype(np.uint8))
    WORD_OPS.reset()
    f2_multiply(x, y)
    formula = n * ((n + 63) // 64) * m
    assert WORD_OPS.words <= 2 * formula
    assert WORD_OPS.words >= formula // 2


def test_rank_one_monomial():
    rng = rng_for(17)
    p = SparseF2Polynomial({((1,), (1,))})
    rows = rng.integers(0, 2, size=(10, 3)).astype(np.uint8)
    cols = rng.integers(0, 2, size=(12, 3)).astype(np.uint8)
    z = evaluate_all_pairs(p, rows, cols)
    want = rows[:, 1][:, None] & cols[:, 1][None, :]
    assert np.array_equal(z.to_dense(), want)


def test_constant_polynomial():
    p = SparseF2Polynomial(constant=1)
    z = evaluate_all_pairs(p, np.zeros((4, 2), np.uint8), np.zeros((6, 2), np.uint8))
    assert z.to_dense().all()


def test_matches_per_pair_evaluation():
    rng = rng_for(19)
    p = random_poly(rng, 8, 8, 50)
    rows = rng.integers(0, 2, size=(32, 8)).astype(np.uint8)
    cols = rng.integers(0, 2, size=(32, 8)).astype(np.uint8)
    z = evaluate_all_pairs(p, rows, cols).to_dense()
    for i in range(32):
        for j in range(32):
            assert z[i, j] == p.evaluate(rows[i], cols[j])


def test_linearity_over_f2():
    rng = rng_for(23)
    rows = rng.integers(0, 2, size=(16, 6)).astype(np.uint8)
    cols = rng.integers(0, 2, size=(16, 6)).astype(np.uint8)
    for _ in range(5):
        p = random_poly(rng, 6, 6, 12)
        q = random_poly(rng, 6, 6, 12)
        lhs = evaluate_all_pairs(p, rows, cols).xor(evaluate_all_pairs(q, rows, cols))
        rhs = evaluate_all_pairs(p.xor(q), rows, cols)
        assert lhs == rhs


def test_evaluation_matrix_layout():
    # columns follow the canonical monomial order
    p = SparseF2Polynomial({((0,), ()), ((), (1,))})
    rows = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    cols = np.array([[1, 1], [1, 0]], dtype=np.uint8)
    m1, m2 = build_evaluation_matrices(p, rows, cols)
    order = p.sorted_monomials()
    assert order == [((), (1,)), ((0,), ())]
    # first column of M1 is the empty row-part (all ones)
    assert m1.to_dense()[:, 0].tolist() == [1, 1]
    assert m1.to_dense()[:, 1].tolist() == [1, 0]
    assert m2.to_dense()[0].tolist() == [1, 0]
    assert m2.to_dense()[1].tolist() == [1, 1]
