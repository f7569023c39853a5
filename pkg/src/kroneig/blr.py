"""Block low-rank vector format and its algebra.

A block ``W = (U, Sigma, V)`` encodes ell vectors of length n_hat * n_til,

    w_j = vec(U @ Sigma(j) @ V^H),    j = 0..ell-1,

with shared bases U (n_hat x r_hat), V (n_til x r_til) and per-column cores
Sigma(j) (r_hat x r_til), stored as one (ell, r_hat, r_til) array. vec
stacks matrix columns, so w_j indexed by (i_til * n_hat + i_hat) matches the
Kronecker convention kron(tilde_part, hat_part). For real data V^H is just
V^T; all formulas below use conjugate transposes so complex factors (which
appear once contour-node solutions enter) work unchanged.

Kronecker-sum operators A = sum_i kron(Atil_i, Ahat_i) are kept as factor
pairs and applied to blocks without ever forming A. Everything here returns
new values; blocks are never mutated in place.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .dense import cholesky, svd_trunc
from .errors import DimensionMismatch, GramNotSPD, OutOfRange, SizeOverflow

__all__ = [
    "BlockLowRank",
    "KroneckerSumOperator",
    "from_khatri_rao",
    "to_dense",
    "apply_operator",
    "add",
    "block_inner",
    "column_norms",
    "right_multiply",
    "truncate",
    "orthonormalize_cholesky",
    "orthonormalize_svd",
    "apply_vec",
    "save_blr",
    "load_blr",
]

DENSE_CAP = 10**7


@dataclass(frozen=True)
class BlockLowRank:
    """Shared-basis low-rank encoding of ell long vectors.

    ``orthonormal`` asserts that U and V both have orthonormal columns
    (truncation establishes it; additions and operator applications lose
    it). ell = 0 (no columns) and r_hat = r_til = 0 (all-zero columns) are
    both legal.
    """

    U: np.ndarray
    V: np.ndarray
    sigma: np.ndarray
    orthonormal: bool = False

    def __post_init__(self):
        if self.sigma.ndim != 3:
            raise DimensionMismatch("BlockLowRank: sigma must be (ell, r_hat, r_til)")
        if self.sigma.shape[1] != self.U.shape[1] or self.sigma.shape[2] != self.V.shape[1]:
            raise DimensionMismatch(
                f"BlockLowRank: core {self.sigma.shape} does not match bases "
                f"{self.U.shape}, {self.V.shape}"
            )

    @property
    def n_hat(self):
        return self.U.shape[0]

    @property
    def n_til(self):
        return self.V.shape[0]

    @property
    def r_hat(self):
        return self.U.shape[1]

    @property
    def r_til(self):
        return self.V.shape[1]

    @property
    def ell(self):
        return self.sigma.shape[0]

    @property
    def n(self):
        return self.n_hat * self.n_til

    @property
    def is_complex(self):
        return any(np.iscomplexobj(a) for a in (self.U, self.V, self.sigma))

    @classmethod
    def empty(cls, n_hat, n_til, ell=0, dtype=float):
        """Block of ell all-zero columns (rank 0); ell=0 gives no columns."""
        return cls(
            np.zeros((n_hat, 0), dtype=dtype),
            np.zeros((n_til, 0), dtype=dtype),
            np.zeros((ell, 0, 0), dtype=dtype),
            orthonormal=True,
        )


@dataclass(frozen=True)
class KroneckerSumOperator:
    """Operator A = sum_i kron(Atil_i, Ahat_i) held as factor pairs.

    ``terms`` is a tuple of (Atil_i, Ahat_i) pairs; all tilde factors are
    n_til x n_til, all hat factors n_hat x n_hat. The full matrix (size
    n_til*n_hat per side) is only ever assembled by the desk-scale oracle.
    """

    terms: tuple

    def __post_init__(self):
        if len(self.terms) < 1:
            raise DimensionMismatch("KroneckerSumOperator: needs at least one term")
        n_til, n_hat = self.n_til, self.n_hat
        for til, hat in self.terms:
            if til.shape != (n_til, n_til) or hat.shape != (n_hat, n_hat):
                raise DimensionMismatch("KroneckerSumOperator: inconsistent factor sizes")

    @property
    def s(self):
        return len(self.terms)

    @property
    def n_til(self):
        return self.terms[0][0].shape[0]

    @property
    def n_hat(self):
        return self.terms[0][1].shape[0]

    @property
    def n(self):
        return self.n_til * self.n_hat


def from_khatri_rao(sk):
    """Exact block low-rank form of a Khatri-Rao sketch.

    QR-factors each side (hat = Qh Rh, tilde = Qt Rt) and stores the rank-1
    cores scale * (Rh e_j)(Rt e_j)^T, so the block's columns equal the
    sketch's columns exactly: kron(t_j, h_j) = vec(h_j t_j^T).
    """
    Qh, Rh = np.linalg.qr(sk.hat, mode="reduced")
    Qt, Rt = np.linalg.qr(sk.tilde, mode="reduced")
    # sigma[j] = scale * outer(Rh[:, j], Rt[:, j])
    sigma = sk.scale * (Rh.T[:, :, None] * Rt.T[:, None, :])
    return BlockLowRank(Qh, np.conj(Qt), sigma)


def to_dense(W, cap=DENSE_CAP):
    """Materialize the represented (n, ell) matrix; desk-scale oracle only."""
    if W.n * max(W.ell, 1) > cap:
        raise SizeOverflow(f"to_dense: {W.n} x {W.ell} exceeds cap of {cap} entries")
    dtype = complex if W.is_complex else float
    out = np.zeros((W.n, W.ell), dtype=dtype)
    Vh = W.V.conj().T
    for j in range(W.ell):
        out[:, j] = (W.U @ W.sigma[j] @ Vh).reshape(-1, order="F")
    return out


def apply_operator(A, W):
    """Image of every column under the Kronecker-sum operator.

    New bases stack the per-term images, Uout = [Ahat_1 U, ..., Ahat_s U]
    and Vout = [conj(Atil_1) V, ...], and each core becomes block-diagonal
    with s copies of Sigma(j); ranks grow exactly s-fold.
    """
    if A.n_hat != W.n_hat or A.n_til != W.n_til:
        raise DimensionMismatch(
            f"apply_operator: operator grid ({A.n_hat}, {A.n_til}) "
            f"vs block ({W.n_hat}, {W.n_til})"
        )
    s = A.s
    Uout = np.hstack([hat @ W.U for _, hat in A.terms])
    Vout = np.hstack([np.conj(til) @ W.V for til, _ in A.terms])
    rh, rt = W.r_hat, W.r_til
    dtype = np.result_type(W.sigma.dtype, *(t.dtype for pair in A.terms for t in pair))
    sigma = np.zeros((W.ell, s * rh, s * rt), dtype=dtype)
    for i in range(s):
        sigma[:, i * rh : (i + 1) * rh, i * rt : (i + 1) * rt] = W.sigma
    return BlockLowRank(Uout, Vout, sigma)


def add(W1, W2):
    """Columnwise sum; bases concatenate, cores go block-diagonal."""
    if (W1.n_hat, W1.n_til) != (W2.n_hat, W2.n_til):
        raise DimensionMismatch("add: blocks live on different grids")
    if W1.ell != W2.ell:
        raise DimensionMismatch(f"add: column counts differ ({W1.ell} vs {W2.ell})")
    U = np.hstack([W1.U, W2.U])
    V = np.hstack([W1.V, W2.V])
    dtype = np.result_type(W1.sigma.dtype, W2.sigma.dtype)
    sigma = np.zeros((W1.ell, W1.r_hat + W2.r_hat, W1.r_til + W2.r_til), dtype=dtype)
    sigma[:, : W1.r_hat, : W1.r_til] = W1.sigma
    sigma[:, W1.r_hat :, W1.r_til :] = W2.sigma
    return BlockLowRank(U, V, sigma)


def block_inner(W1, W2):
    """Gram-type matrix W1^H W2 of shape (ell1, ell2), never materialized.

    Entry (i1, i2) = trace(Sigma1(i1)^H (U1^H U2) Sigma2(i2) (V2^H V1)).
    When both arguments are the same orthonormal-factor block this
    simplifies to trace(Sigma(i1)^H Sigma(i2)).
    """
    if (W1.n_hat, W1.n_til) != (W2.n_hat, W2.n_til):
        raise DimensionMismatch("block_inner: blocks live on different grids")
    if W1 is W2 and W1.orthonormal:
        S = W1.sigma.reshape(W1.ell, -1)
        return np.conj(S) @ S.T
    Gu = W1.U.conj().T @ W2.U
    Gv = W2.V.conj().T @ W1.V
    mid = np.einsum("ab,jbc,cd->jad", Gu, W2.sigma, Gv, optimize=True)
    return np.einsum("iad,jad->ij", np.conj(W1.sigma), mid, optimize=True)


def column_norms(W):
    """Per-column 2-norms computed from orthogonal-invariant cores.

    QR-reduces both bases and measures ||R_u Sigma(j) R_v^H||_F. Unlike
    the diagonal of block_inner this stays accurate when the represented
    columns are tiny differences of large factors (residual blocks): the
    cancellation happens inside backward-stable products instead of
    between O(||factor||^2) Gram entries.
    """
    if W.r_hat == 0 or W.r_til == 0 or W.ell == 0:
        return np.zeros(W.ell)
    Ru = np.linalg.qr(W.U, mode="r")
    Rv = np.linalg.qr(W.V, mode="r")
    Rvh = Rv.conj().T
    return np.array(
        [np.linalg.norm(Ru @ W.sigma[j] @ Rvh) for j in range(W.ell)]
    )


def right_multiply(W, B):
    """Image under a thin right factor: columns of the result are W @ B.

    Bases are untouched; cores combine linearly, Sigma_out(i) =
    sum_j B[j, i] Sigma(j). Ranks never change.
    """
    B = np.asarray(B)
    if B.ndim != 2 or B.shape[0] != W.ell:
        raise DimensionMismatch(f"right_multiply: B has {B.shape}, block has ell={W.ell}")
    sigma = np.einsum("ji,jab->iab", B, W.sigma, optimize=True)
    return replace(W, sigma=sigma)


def truncate(W, eps, r_max=None):
    """Rank reduction by two-sided core compression.

    QR-factors both bases, folds the R factors into the cores C(j) =
    Ru Sigma(j) Rv^H, then cuts each mode independently: the hat rank by an
    SVD of the horizontal stack [C(0), ..., C(ell-1)], the tilde rank by an
    SVD of the stack of conjugate-transposed slices — both taken from the
    same folded cores, each with relative tail tolerance eps/sqrt(2) and
    hard cap r_max. The output has orthonormal bases and the compressed
    cores U1^H C(j) U2; its columns match W's to a combined relative error
    close to eps (the per-mode cuts interact, see the truncation tests).
    """
    if eps < 0:
        raise OutOfRange("truncate: eps must be >= 0")
    if r_max is not None and r_max < 1:
        raise OutOfRange("truncate: r_max must be >= 1")
    if W.ell == 0 or W.r_hat == 0 or W.r_til == 0:
        dtype = complex if W.is_complex else float
        return BlockLowRank.empty(W.n_hat, W.n_til, W.ell, dtype=dtype)
    Qu, Ru = np.linalg.qr(W.U, mode="reduced")
    Qv, Rv = np.linalg.qr(W.V, mode="reduced")
    core = np.einsum("ab,jbc,dc->jad", Ru, W.sigma, np.conj(Rv), optimize=True)
    ell, rh, rt = core.shape
    tol = eps / np.sqrt(2.0)
    # mode 1: rows indexed by the hat rank
    unf1 = np.swapaxes(core, 0, 1).reshape(rh, ell * rt)
    U1, s1, _ = svd_trunc(unf1, tol, r_max)
    # mode 2: rows indexed by the tilde rank, slices conjugate-transposed,
    # taken from the original folded core (not the mode-1 compressed one)
    unf2 = np.conj(np.swapaxes(core, 0, 2)).reshape(rt, ell * rh)
    U2, s2, _ = svd_trunc(unf2, tol, r_max)
    new_core = np.einsum("ba,jbc,cd->jad", np.conj(U1), core, U2, optimize=True)
    if s1.size == 0 or s2.size == 0:
        dtype = complex if W.is_complex else float
        return BlockLowRank.empty(W.n_hat, W.n_til, W.ell, dtype=dtype)
    return BlockLowRank(Qu @ U1, Qv @ U2, new_core, orthonormal=True)


def orthonormalize_cholesky(W):
    """Column-orthonormalize a block through its Gram matrix.

    Returns (Worth, L) with L the lower Cholesky factor of block_inner(W, W)
    and Worth = W L^{-H}, so block_inner(Worth, Worth) = I. Raises
    GramNotSPD when the Gram is numerically rank-deficient; callers fall
    back to an SVD-based cleanup.
    """
    G = block_inner(W, W)
    G = 0.5 * (G + G.conj().T)
    try:
        L = cholesky(G)
    except Exception as exc:
        raise GramNotSPD(f"orthonormalize_cholesky: {exc}") from exc
    # W L^{-H}: columns of the inverse conjugate-transposed factor
    Linv = scipy.linalg.solve_triangular(L, np.eye(L.shape[0], dtype=L.dtype), lower=True)
    return right_multiply(W, Linv.conj().T), L


def orthonormalize_svd(W, tol=1e-12):
    """Gram-eigendecomposition orthonormalization dropping null directions.

    Fallback for orthonormalize_cholesky when the Gram is numerically
    singular: keeps the eigendirections with eigenvalue > tol * max
    eigenvalue and rescales them to unit length. Returns (Worth, kept);
    Worth has kept <= ell columns (possibly zero when W itself is zero)
    with block_inner(Worth, Worth) = I on the kept part.
    """
    G = block_inner(W, W)
    G = 0.5 * (G + G.conj().T)
    lam, Q = scipy.linalg.eigh(G)
    lmax = lam[-1] if lam.size else 0.0
    if lmax <= 0.0:
        return right_multiply(W, np.zeros((W.ell, 0))), 0
    keep = lam > tol * lmax
    B = Q[:, keep] / np.sqrt(lam[keep])
    return right_multiply(W, B), int(np.count_nonzero(keep))


def apply_vec(A, v):
    """Kronecker-sum operator times one dense vector (power iterations,
    dense cross-checks). vec convention as in the module docstring."""
    v = np.asarray(v)
    if v.shape[0] != A.n:
        raise DimensionMismatch(f"apply_vec: vector length {v.shape[0]} vs n={A.n}")
    X = v.reshape((A.n_hat, A.n_til), order="F")
    out = sum(hat @ X @ til.T for til, hat in A.terms)
    return out.reshape(-1, order="F")


_MAGIC = b"KRBL"


def save_blr(W, fh):
    """Serialize a block: fixed header, then U, V and the core slices as
    little-endian 64-bit floats (complex as interleaved pairs)."""
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "wb")
        close = True
    try:
        kind = b"c" if W.is_complex else b"f"
        fh.write(_MAGIC)
        fh.write(
            struct.pack(
                "<cBqqqqq",
                kind,
                1 if W.orthonormal else 0,
                W.n_hat,
                W.n_til,
                W.r_hat,
                W.r_til,
                W.ell,
            )
        )
        dt = "<c16" if kind == b"c" else "<f8"
        for arr in (W.U, W.V, W.sigma):
            fh.write(np.ascontiguousarray(arr).astype(dt).tobytes())
    finally:
        if close:
            fh.close()


def load_blr(fh):
    """Inverse of save_blr."""
    close = False
    if isinstance(fh, (str, bytes)):
        fh = open(fh, "rb")
        close = True
    try:
        if fh.read(4) != _MAGIC:
            raise OutOfRange("load_blr: bad magic")
        kind, orth, n_hat, n_til, r_hat, r_til, ell = struct.unpack(
            "<cBqqqqq", fh.read(struct.calcsize("<cBqqqqq"))
        )
        dt = np.dtype("<c16") if kind == b"c" else np.dtype("<f8")

        def rd(shape):
            count = int(np.prod(shape))
            arr = np.frombuffer(fh.read(count * dt.itemsize), dtype=dt).reshape(shape)
            return arr.astype(complex if kind == b"c" else float)

        U = rd((n_hat, r_hat))
        V = rd((n_til, r_til))
        sigma = rd((ell, r_hat, r_til))
        return BlockLowRank(U, V, sigma, orthonormal=bool(orth))
    finally:
        if close:
            fh.close()
