"""Dense linear-algebra kernels shared by every other module.

Matrices are plain ``numpy.ndarray`` values in C (row-major) order, real or
complex; "transpose" always means conjugate transpose in the complex case.
The functions here are thin wrappers over LAPACK (via numpy/scipy) that add
the truncation rules and the error conventions the rest of the library
relies on. All functions are pure.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import BtilNotSPD, NotPositiveDefinite, OutOfRange

__all__ = ["qr_econ", "svd_trunc", "cholesky", "eig_sym_gen", "two_norm"]


def qr_econ(M):
    """Economy QR factorization M = Q R with Q of orthonormal columns.

    Parameters
    ----------
    M : (m, n) array_like, m >= n
    Returns
    -------
    Q : (m, n) ndarray with Q^H Q = I
    R : (n, n) upper triangular ndarray

    Rank-deficient input yields an R with small diagonal entries; callers
    that care must inspect R themselves.
    """
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] < M.shape[1]:
        raise OutOfRange(f"qr_econ expects a tall matrix, got shape {M.shape}")
    Q, R = np.linalg.qr(M, mode="reduced")
    return Q, R


def svd_trunc(M, tol=0.0, r_max=None):
    """Truncated SVD with a relative tail-energy cut.

    Returns ``(U, s, Vh)`` with ``M ~ (U * s) @ Vh`` where the retained rank
    r is the smallest value such that the discarded tail satisfies
    ``sqrt(sum_{i>r} s_i^2) <= tol * ||s||_2``, then capped at ``r_max``.
    Singular values are nonincreasing; ties at the threshold are resolved by
    index order, so the result is deterministic. ``tol=0`` keeps every
    nonzero singular value (an exactly zero matrix yields rank 0).
    """
    M = np.asarray(M)
    if tol < 0:
        raise OutOfRange("svd_trunc: tol must be >= 0")
    kmax = min(M.shape)
    if r_max is None:
        r_max = kmax
    if r_max < 1:
        raise OutOfRange("svd_trunc: r_max must be >= 1")
    if kmax == 0:
        return (
            np.zeros((M.shape[0], 0), dtype=M.dtype),
            np.zeros(0),
            np.zeros((0, M.shape[1]), dtype=M.dtype),
        )
    U, s, Vh = np.linalg.svd(M, full_matrices=False)
    # suffix[r] = sum_{i >= r} s_i^2, so the cut rule reads
    # sqrt(suffix[r]) <= tol * sqrt(suffix[0])
    sq = s * s
    suffix = np.concatenate([np.cumsum(sq[::-1])[::-1], [0.0]])
    thresh = tol * np.sqrt(suffix[0])
    r = int(np.searchsorted(-np.sqrt(suffix), -thresh))
    r = min(r, r_max, kmax)
    return U[:, :r], s[:r], Vh[:r]


def cholesky(G):
    """Lower Cholesky factor L with L L^H = G for Hermitian positive
    definite G.

    Raises
    ------
    NotPositiveDefinite
        when the factorization fails; callers use this as the signal to
        switch to their SVD-based fallback.
    """
    G = np.asarray(G)
    try:
        return scipy.linalg.cholesky(G, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc


def eig_sym_gen(Atil, Btil, want):
    """Smallest eigenpairs of the Hermitian pencil (Atil, Btil).

    Solves ``Atil C = Btil C diag(Theta)`` for the ``want`` algebraically
    smallest eigenvalues, Btil Hermitian positive definite. Eigenvalues come
    back ascending and real; C is Btil-orthonormal (C^H Btil C = I).
    """
    Atil = np.asarray(Atil)
    Btil = np.asarray(Btil)
    k = Atil.shape[0]
    if not (1 <= want <= k):
        raise OutOfRange(f"eig_sym_gen: want={want} outside 1..{k}")
    try:
        theta, C = scipy.linalg.eigh(Atil, Btil, subset_by_index=[0, want - 1])
    except scipy.linalg.LinAlgError as exc:
        raise BtilNotSPD(str(exc)) from exc
    return theta, C


def two_norm(M):
    """Spectral norm (largest singular value); 0 for an empty matrix."""
    M = np.asarray(M)
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))
