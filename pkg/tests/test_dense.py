"""Small dense kernels: factorizations, truncation, generalized Ritz."""

import numpy as np
import pytest
import scipy.linalg

from conftest import make_rng
from kroneig.dense import cholesky, eig_sym_gen, qr_econ, svd_trunc, two_norm
from kroneig.errors import BtilNotSPD, NotPositiveDefinite, OutOfRange


def test_qr_econ_reconstructs_and_is_economy():
    rng = make_rng(10)
    for rows, cols in [(12, 5), (5, 5), (30, 1)]:
        M = rng.standard_normal((rows, cols))
        Q, R = qr_econ(M)
        assert Q.shape == (rows, cols)
        assert R.shape == (cols, cols)
        assert np.allclose(Q @ R, M, atol=1e-12)
        assert np.allclose(Q.T @ Q, np.eye(cols), atol=1e-12)


def test_qr_econ_complex():
    rng = make_rng(11)
    M = rng.standard_normal((9, 4)) + 1j * rng.standard_normal((9, 4))
    Q, R = qr_econ(M)
    assert np.allclose(Q @ R, M, atol=1e-12)
    assert np.allclose(Q.conj().T @ Q, np.eye(4), atol=1e-12)


def test_svd_trunc_lossless_at_zero_tol():
    rng = make_rng(12)
    M = rng.standard_normal((10, 7))
    U, s, Vh = svd_trunc(M, tol=0.0)
    assert np.allclose(U @ np.diag(s) @ Vh, M, atol=1e-12)
    assert s.shape == (7,)
    assert np.all(np.diff(s) <= 0)


def test_svd_trunc_energy_cut():
    # Singular values 1, 1e-3, 1e-6, ...: the discarded tail must stay
    # below tol times the full spectral energy.
    svals = np.array([1.0, 1e-3, 1e-6, 1e-9])
    rng = make_rng(13)
    Q1, _ = np.linalg.qr(rng.standard_normal((8, 4)))
    Q2, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    M = Q1 @ np.diag(svals) @ Q2.T
    for tol, expect_rank in [(1e-2, 1), (1e-5, 2), (1e-8, 3), (0.0, 4)]:
        U, s, Vh = svd_trunc(M, tol=tol)
        assert len(s) == expect_rank
        tail = np.linalg.norm(M - U @ np.diag(s) @ Vh)
        assert tail <= tol * np.linalg.norm(svals) + 1e-14


def test_svd_trunc_rank_cap_binds():
    rng = make_rng(14)
    M = rng.standard_normal((9, 9))
    U, s, Vh = svd_trunc(M, tol=0.0, r_max=3)
    assert len(s) == 3
    # Best rank-3 approximation error equals the fourth singular value.
    full = np.linalg.svd(M, compute_uv=False)
    err = two_norm(M - U @ np.diag(s) @ Vh)
    assert abs(err - full[3]) < 1e-10


def test_svd_trunc_zero_matrix():
    U, s, Vh = svd_trunc(np.zeros((5, 3)), tol=0.0)
    assert len(s) == 0
    assert U.shape == (5, 0) and Vh.shape == (0, 3)


def test_svd_trunc_validation():
    M = np.eye(3)
    with pytest.raises(OutOfRange):
        svd_trunc(M, tol=-1e-3)
    with pytest.raises(OutOfRange):
        svd_trunc(M, tol=0.0, r_max=0)


def test_cholesky_lower_and_failure():
    rng = make_rng(15)
    B = rng.standard_normal((6, 6))
    G = B @ B.T + 6 * np.eye(6)
    L = cholesky(G)
    assert np.allclose(L @ L.T, G, atol=1e-10)
    assert np.allclose(L, np.tril(L))
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, -1.0]))


def test_eig_sym_gen_matches_scipy_subset():
    rng = make_rng(16)
    k, want = 9, 4
    A0 = rng.standard_normal((k, k))
    A = 0.5 * (A0 + A0.T)
    Bf = rng.standard_normal((k, k))
    B = Bf @ Bf.T + k * np.eye(k)
    theta, C = eig_sym_gen(A, B, want)
    ref = scipy.linalg.eigh(A, B, eigvals_only=True)
    assert np.allclose(theta, ref[:want], atol=1e-11)
    assert np.all(np.diff(theta) >= -1e-13)
    # Eigenvector block is B-orthonormal and diagonalizes A.
    assert np.allclose(C.T @ B @ C, np.eye(want), atol=1e-10)
    assert np.allclose(C.T @ A @ C, np.diag(theta), atol=1e-9)


def test_eig_sym_gen_validation():
    A = np.diag([1.0, 2.0, 3.0])
    B = np.eye(3)
    with pytest.raises(OutOfRange):
        eig_sym_gen(A, B, 0)
    with pytest.raises(OutOfRange):
        eig_sym_gen(A, B, 4)
    with pytest.raises(BtilNotSPD):
        eig_sym_gen(A, np.diag([1.0, 1.0, -1.0]), 2)


def test_two_norm():
    rng = make_rng(17)
    M = rng.standard_normal((7, 4))
    assert abs(two_norm(M) - np.linalg.svd(M, compute_uv=False)[0]) < 1e-12
    assert two_norm(np.zeros((3, 2))) == 0.0
