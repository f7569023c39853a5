"""Block low-rank algebra against dense oracles at desk scale."""

import io

import numpy as np
import pytest

from conftest import kron_dense, make_rng, random_block, random_sym_kron_operator
from kroneig.blr import (
    BlockLowRank,
    add,
    apply_operator,
    apply_vec,
    block_inner,
    column_norms,
    from_khatri_rao,
    load_blr,
    orthonormalize_cholesky,
    orthonormalize_svd,
    right_multiply,
    save_blr,
    to_dense,
    truncate,
)
from kroneig.errors import DimensionMismatch, SizeOverflow
from kroneig.sketch import draw_khatri_rao, khatri_rao_dense


def test_to_dense_matches_definition():
    rng = make_rng(30)
    W = random_block(rng, 5, 4, 3, 2, 2)
    D = to_dense(W)
    assert D.shape == (20, 3)
    for j in range(3):
        col = (W.U @ W.sigma[j] @ W.V.T).reshape(-1, order="F")
        assert np.allclose(D[:, j], col, atol=1e-14)


def test_to_dense_cap():
    rng = make_rng(31)
    W = random_block(rng, 50, 50, 4, 2, 2)
    with pytest.raises(SizeOverflow):
        to_dense(W, cap=100)


def test_from_khatri_rao_is_exact():
    sk = draw_khatri_rao(n_til=6, n_hat=5, ell=4, seed=2)
    W = from_khatri_rao(sk)
    assert np.allclose(to_dense(W), khatri_rao_dense(sk), atol=1e-14)
    # Each sketch column contributes one basis direction per side.
    assert W.r_hat == 4 and W.r_til == 4


def test_core_shape_validation():
    rng = make_rng(32)
    with pytest.raises(DimensionMismatch):
        BlockLowRank(
            rng.standard_normal((5, 2)),
            rng.standard_normal((4, 2)),
            rng.standard_normal((3, 2, 3)),
        )


def test_empty_block():
    W = BlockLowRank.empty(5, 4, ell=3)
    assert to_dense(W).shape == (20, 3)
    assert np.all(to_dense(W) == 0.0)
    assert np.all(column_norms(W) == 0.0)


def test_apply_operator_matches_dense_and_rank_accounting():
    rng = make_rng(33)
    A = random_sym_kron_operator(rng, 5, 4, terms=3)
    W = random_block(rng, 5, 4, 3, 2, 2)
    AW = apply_operator(A, W)
    assert np.allclose(to_dense(AW), kron_dense(A) @ to_dense(W), atol=1e-12)
    # Each operator term appends one copy of each basis.
    assert AW.r_hat == 3 * W.r_hat and AW.r_til == 3 * W.r_til


def test_add_matches_dense():
    rng = make_rng(34)
    W1 = random_block(rng, 6, 5, 3, 2, 3)
    W2 = random_block(rng, 6, 5, 3, 4, 1)
    S = add(W1, W2)
    assert np.allclose(to_dense(S), to_dense(W1) + to_dense(W2), atol=1e-13)
    assert S.r_hat == 6 and S.r_til == 4
    with pytest.raises(DimensionMismatch):
        add(W1, random_block(rng, 6, 5, 2, 2, 2))


def test_right_multiply_matches_dense():
    rng = make_rng(35)
    W = random_block(rng, 6, 5, 4, 2, 2)
    B = rng.standard_normal((4, 3))
    WB = right_multiply(W, B)
    assert np.allclose(to_dense(WB), to_dense(W) @ B, atol=1e-13)
    # Basis sizes are untouched; only cores recombine.
    assert (WB.r_hat, WB.r_til, WB.ell) == (2, 2, 3)


def test_block_inner_matches_dense_gram():
    rng = make_rng(36)
    for complex_ in (False, True):
        W1 = random_block(rng, 6, 5, 3, 2, 2, complex_=complex_)
        W2 = random_block(rng, 6, 5, 4, 3, 2, complex_=complex_)
        G = block_inner(W1, W2)
        ref = to_dense(W1).conj().T @ to_dense(W2)
        assert G.shape == (3, 4)
        assert np.allclose(G, ref, atol=1e-12)


def test_column_norms_matches_dense():
    rng = make_rng(37)
    W = random_block(rng, 7, 6, 5, 3, 2, complex_=True)
    ref = np.linalg.norm(to_dense(W), axis=0)
    assert np.allclose(column_norms(W), ref, atol=1e-12)


def test_column_norms_cancellation_safe():
    # W - W represented as a concatenation: the dense columns are exactly
    # zero while the factors are O(1). The QR route must see the
    # cancellation instead of summing large Gram entries.
    rng = make_rng(38)
    W = random_block(rng, 8, 7, 3, 2, 2)
    Z = add(W, right_multiply(W, -np.eye(3)))
    assert np.all(column_norms(Z) < 1e-13)


def test_truncate_error_contract_and_flags():
    rng = make_rng(39)
    eps = 1e-3
    for _ in range(10):
        W = random_block(rng, 9, 8, 4, 5, 5)
        T = truncate(W, eps)
        assert T.orthonormal
        err = np.linalg.norm(to_dense(T) - to_dense(W))
        # Two sequential one-sided cuts at eps/sqrt(2) each.
        assert err <= 2.0 * eps * np.linalg.norm(to_dense(W)) + 1e-12
        assert np.allclose(T.U.T @ T.U, np.eye(T.r_hat), atol=1e-12)
        assert np.allclose(T.V.T @ T.V, np.eye(T.r_til), atol=1e-12)


def test_truncate_recovers_exact_rank():
    # Padded factors of true rank (2, 2) collapse back to rank (2, 2).
    rng = make_rng(40)
    core = random_block(rng, 9, 8, 3, 2, 2)
    pad = right_multiply(core, np.eye(3))
    grown = add(pad, right_multiply(core, 0.5 * np.eye(3)))
    assert (grown.r_hat, grown.r_til) == (4, 4)
    T = truncate(grown, 1e-12)
    assert (T.r_hat, T.r_til) == (2, 2)
    assert np.allclose(to_dense(T), to_dense(grown), atol=1e-10)


def test_truncate_r_max_binds():
    rng = make_rng(41)
    W = random_block(rng, 10, 9, 4, 6, 6)
    T = truncate(W, 0.0, r_max=3)
    assert max(T.r_hat, T.r_til) <= 3
    T2 = truncate(W, 0.0)
    assert np.allclose(to_dense(T2), to_dense(W), atol=1e-11)


def test_truncate_idempotent():
    rng = make_rng(42)
    W = random_block(rng, 9, 8, 4, 4, 4)
    T1 = truncate(W, 1e-8)
    T2 = truncate(T1, 1e-8)
    assert np.allclose(to_dense(T1), to_dense(T2), atol=1e-12)
    assert (T2.r_hat, T2.r_til) == (T1.r_hat, T1.r_til)


def test_orthonormalize_cholesky():
    rng = make_rng(43)
    W = random_block(rng, 8, 7, 4, 3, 3)
    Q, L = orthonormalize_cholesky(W)
    G = block_inner(Q, Q)
    assert np.allclose(G, np.eye(4), atol=1e-8)
    # Q L^T recovers the original columns (L is the lower Gram factor).
    assert np.allclose(to_dense(right_multiply(Q, L.T)), to_dense(W), atol=1e-9)
    # Scaled identity Gram: columns 3x an orthonormal set give L = 3I.
    base = truncate(random_block(rng, 8, 7, 3, 2, 2), 0.0)
    ortho, _ = orthonormalize_cholesky(base)
    scaled = right_multiply(ortho, 3.0 * np.eye(3))
    _, L3 = orthonormalize_cholesky(scaled)
    assert np.allclose(L3, 3.0 * np.eye(3), atol=1e-10)


def test_orthonormalize_svd_drops_null_columns():
    rng = make_rng(44)
    W = random_block(rng, 8, 7, 3, 3, 3)
    # Duplicate a column: the 6-column block has numerical rank 3 wrt columns.
    WW = BlockLowRank(W.U, W.V, np.concatenate([W.sigma, W.sigma], axis=0))
    Q, kept = orthonormalize_svd(WW)
    assert kept == 3 and Q.ell == 3
    G = block_inner(Q, Q)
    assert np.allclose(G, np.eye(Q.ell), atol=1e-8)
    # Span is preserved: original columns project onto Q exactly.
    D, QD = to_dense(WW), to_dense(Q)
    assert np.allclose(QD @ (QD.conj().T @ D), D, atol=1e-8)


def test_apply_vec_matches_dense():
    rng = make_rng(45)
    A = random_sym_kron_operator(rng, 5, 4, terms=2)
    v = rng.standard_normal(20)
    assert np.allclose(apply_vec(A, v), kron_dense(A) @ v, atol=1e-12)


def test_save_load_round_trip():
    rng = make_rng(46)
    for complex_ in (False, True):
        W = random_block(rng, 6, 5, 3, 2, 4, complex_=complex_)
        buf = io.BytesIO()
        save_blr(W, buf)
        buf.seek(0)
        W2 = load_blr(buf)
        assert np.array_equal(W.U, W2.U)
        assert np.array_equal(W.V, W2.V)
        assert np.array_equal(W.sigma, W2.sigma)
        assert W.orthonormal == W2.orthonormal


def test_random_composition_chains():
    # Random pipelines of the primitive operations, mirrored densely.
    rng = make_rng(47)
    for trial in range(60):
        n_hat = int(rng.integers(3, 9))
        n_til = int(rng.integers(3, 9))
        ell = int(rng.integers(1, 5))
        W = random_block(rng, n_hat, n_til, ell, int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        D = to_dense(W)
        A = random_sym_kron_operator(rng, n_hat, n_til, terms=2)
        Ad = kron_dense(A)
        for _ in range(int(rng.integers(1, 5))):
            op = rng.integers(0, 4)
            if op == 0:
                W = apply_operator(A, W)
                D = Ad @ D
            elif op == 1:
                other = random_block(rng, n_hat, n_til, ell, 2, 2)
                W = add(W, other)
                D = D + to_dense(other)
            elif op == 2:
                B = rng.standard_normal((ell, ell))
                W = right_multiply(W, B)
                D = D @ B
            else:
                W = truncate(W, 1e-13)
        scale = max(np.linalg.norm(D), 1.0)
        assert np.linalg.norm(to_dense(W) - D) <= 1e-10 * scale
