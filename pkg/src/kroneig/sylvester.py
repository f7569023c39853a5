"""Low-rank solvers for shifted two- and three-term Sylvester equations.

The three-term ("multiterm") equation solved here is

    Acoef X + X Bcoef^T - Cl X Cr = F G^T,

the matricized form of one shifted Kronecker-structured linear system: for a
quadrature node z the coefficients are Acoef = Bcoef = (z/2) I - K and the
coupling factors Cl, Cr are the two potential diagonals. Everything is
carried in factored pairs: a rank-r matrix is a pair (F, G) of n_hat x r
and n_til x r blocks with X = F @ G.T. The transpose is PLAIN, also for
complex data; wherever an adjoint is meant the conjugation is written out.

Two preconditioners are available for the BiCGstab iteration:

* "eig2" (default) inverts the two-term part exactly in the eigenbasis of
  K, one symmetric eigendecomposition per coefficient matrix, shared across
  nodes/columns when the caller constructs the preconditioner once. Robust
  at every node of a contour, including nodes whose real part falls inside
  the sum-spectrum of the operator.
* "adi" runs a few factored ADI steps with shifts taken from the real
  spectral interval of K translated by z/2. Classical and cheap, but only
  convergent when Re(z) stays below twice the smallest eigenvalue of K so
  that the spectra of the two coefficients remain separated; for interior
  contour nodes the translated real ladder amplifies interior modes and the
  iteration diverges. Use it for the SPD/Lyapunov regime (it is the LOBPCG
  preconditioner), not for interior nodes.

BiCGstab recursion residuals drift away from true residuals once iterates
are truncated, so the solver recomputes the true factored residual
periodically and at every claimed convergence; the reported residual is
always a true one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

from .dense import svd_trunc
from .errors import (
    Breakdown,
    DegenerateInterval,
    DimensionMismatch,
    OutOfRange,
    SingularShiftedSolve,
    StructureMismatch,
)

__all__ = [
    "MultitermSylvester",
    "FactoredSolution",
    "pair_inner",
    "pair_norm",
    "pair_truncate",
    "adi_shifts",
    "translated_adi_shifts",
    "adi_solve",
    "EigenbasisPreconditioner",
    "AdiPreconditioner",
    "bicgstab_multiterm",
    "multiterm_residual",
]

# ---------------------------------------------------------------------------
# factored-pair algebra


def pair_inner(F1, G1, F2, G2):
    """Frobenius inner product <F1 G1^T, F2 G2^T> without materialization.

    trace((F1 G1^T)^H F2 G2^T) = sum_{ij} (F1^H F2)_{ij} (G1^H G2)_{ij}.
    """
    return np.sum((F1.conj().T @ F2) * (G1.conj().T @ G2))


def pair_norm(F, G):
    """Frobenius norm of F G^T via Gram matrices."""
    return math.sqrt(max(pair_inner(F, G, F, G).real, 0.0))


def pair_truncate(F, G, tol, r_max=None):
    """Recompress a factored pair: QR both factors, SVD the small core.

    Returns (F2, G2) with F2 G2^T close to F G^T, the discarded tail
    bounded by tol relative to the Frobenius norm, rank capped at r_max.
    The square-root-balanced split keeps both factors equally conditioned.
    """
    if F.shape[1] != G.shape[1]:
        raise DimensionMismatch("pair_truncate: factor ranks differ")
    if F.shape[1] == 0:
        return F, G
    Qf, Rf = np.linalg.qr(F, mode="reduced")
    Qg, Rg = np.linalg.qr(G, mode="reduced")
    U, s, Vh = svd_trunc(Rf @ Rg.T, tol, r_max)
    if s.size == 0:
        return Qf[:, :0], Qg[:, :0]
    sq = np.sqrt(s)
    # X = Qf U diag(s) Vh Qg^T, so the right factor is Qg (Vh^T * sqrt(s)):
    # a plain transpose of Vh (conjugating here would conjugate X itself)
    return Qf @ (U * sq), Qg @ (Vh.T * sq)


def _fast_mul(M):
    """Matrix-times-block closure with sparse/diagonal fast paths."""
    M = np.asarray(M)
    n = M.shape[0]
    nz = np.count_nonzero(M)
    offdiag = nz - np.count_nonzero(np.diag(M))
    if offdiag == 0:
        d = np.diag(M).copy()
        return lambda B: d[:, None] * B
    if nz < 0.1 * n * n:
        S = scipy.sparse.csr_matrix(M)
        return lambda B: S @ B
    return lambda B: M @ B


def _shifted_solver(M):
    """Factor M once and return a solve closure; banded when M is banded."""
    M = np.asarray(M)
    n = M.shape[0]
    rows, cols = np.nonzero(M)
    bw = int(np.max(np.abs(rows - cols))) if rows.size else 0
    try:
        if bw <= 2 and n > 8:
            ab = np.zeros((2 * bw + 1, n), dtype=M.dtype)
            for d in range(-bw, bw + 1):
                diag = np.diagonal(M, d)
                ab[bw - d, max(d, 0) : max(d, 0) + diag.size] = diag

            def solve(B):
                try:
                    return scipy.linalg.solve_banded((bw, bw), ab, B)
                except scipy.linalg.LinAlgError as exc:
                    raise SingularShiftedSolve(str(exc)) from exc

            return solve
        lu = scipy.linalg.lu_factor(M)
        if np.min(np.abs(np.diag(lu[0]))) == 0.0:
            raise SingularShiftedSolve("shifted matrix is exactly singular")
        return lambda B: scipy.linalg.lu_solve(lu, B)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise SingularShiftedSolve(str(exc)) from exc


# ---------------------------------------------------------------------------
# problem container


@dataclass
class MultitermSylvester:
    """One shifted three-term Sylvester problem in factored form.

    Encodes ``Acoef X + X Bcoef^T - coupling_left X coupling_right = F G^T``
    with X of shape (n_hat, n_til); ``z`` records the originating spectral
    shift (Acoef = Bcoef = (z/2) I - K for contour nodes) and drives the
    preconditioners.
    """

    Acoef: np.ndarray
    Bcoef: np.ndarray
    coupling_left: np.ndarray
    coupling_right: np.ndarray
    F: np.ndarray
    G: np.ndarray
    z: complex = 0.0

    def __post_init__(self):
        n_hat, n_til = self.Acoef.shape[0], self.Bcoef.shape[0]
        if self.F.shape[0] != n_hat or self.G.shape[0] != n_til:
            raise DimensionMismatch("MultitermSylvester: rhs factors do not fit")
        if self.F.shape[1] != self.G.shape[1] or self.F.shape[1] < 1:
            raise DimensionMismatch("MultitermSylvester: rhs rank must be >= 1")
        if self.coupling_left.shape[0] != n_hat or self.coupling_right.shape[0] != n_til:
            raise DimensionMismatch("MultitermSylvester: coupling sizes do not fit")
        self._mul_a = _fast_mul(self.Acoef)
        self._mul_b = _fast_mul(self.Bcoef)
        self._mul_cl = _fast_mul(self.coupling_left)
        self._mul_crt = _fast_mul(np.asarray(self.coupling_right).T)

    @property
    def n_hat(self):
        return self.Acoef.shape[0]

    @property
    def n_til(self):
        return self.Bcoef.shape[0]

    def apply_pair(self, F, G):
        """Factored image (Fo, Go) with Fo Go^T = L(F G^T); rank triples."""
        Fo = np.hstack([self._mul_a(F), F, -self._mul_cl(F)])
        Go = np.hstack([G, self._mul_b(G), self._mul_crt(G)])
        return Fo, Go

    def real_symmetric_parts(self):
        """Recover (K_hat, K_til) from Acoef = (z/2) I - K_hat etc.

        Raises StructureMismatch when the coefficients are not of that form
        with real symmetric K.
        """
        out = []
        for M in (self.Acoef, self.Bcoef):
            K = (self.z / 2.0) * np.eye(M.shape[0]) - M
            if np.iscomplexobj(K):
                scale = max(np.max(np.abs(K.real)), 1.0)
                if np.max(np.abs(K.imag)) > 1e-12 * scale:
                    raise StructureMismatch("coefficient is not (z/2) I - K with real K")
                K = np.real(K)
            if not np.allclose(K, K.T, rtol=1e-12, atol=1e-12):
                raise StructureMismatch("coefficient is not symmetric")
            out.append(K)
        return out[0], out[1]


def multiterm_residual(problem, sol):
    """Relative Frobenius residual of a factored solution, Gram-based.

    ||L(X) - F G^T||_F / ||F G^T||_F computed entirely from low-rank
    factors; a zero solution gives exactly 1.
    """
    bnorm = pair_norm(problem.F, problem.G)
    if sol.Xhat.shape[1] == 0:
        return 1.0
    LF, LG = problem.apply_pair(sol.Xhat, sol.Xtil)
    RF = np.hstack([LF, problem.F])
    RG = np.hstack([LG, -problem.G])
    return pair_norm(RF, RG) / bnorm


@dataclass
class FactoredSolution:
    """Low-rank solution X = Xhat @ Xtil.T with solver bookkeeping.

    The pair uses the plain-transpose convention; conjugate Xtil to read the
    solution in adjoint form. ``achieved_residual`` is always a true
    (recomputed) relative residual, never the recursion's estimate.
    """

    Xhat: np.ndarray
    Xtil: np.ndarray
    achieved_residual: float
    iterations: int
    converged: bool = True

    @property
    def rank(self):
        return self.Xhat.shape[1]


# ---------------------------------------------------------------------------
# ADI


def adi_shifts(interval_a, interval_b, count):
    """Shift pairs for Ac X + X Bc^T = F G^T with SPD-like coefficients.

    Both intervals must be positive (they usually come from Gershgorin
    bounds; a lower bound touching 0 is floored at 1e-8 times the upper).
    Returns ``count`` pairs (alpha_j, beta_j) = (p_j, -p_j) with p_j the
    geometric midpoints of the combined interval; the antisymmetric pattern
    makes the recipe invariant under swapping the two intervals.
    """
    if count < 1:
        raise OutOfRange("adi_shifts: count must be >= 1")
    lo = min(interval_a[0], interval_b[0])
    hi = max(interval_a[1], interval_b[1])
    if hi <= 0 or hi < lo:
        raise DegenerateInterval(f"adi_shifts: bad intervals {interval_a}, {interval_b}")
    lo = max(lo, 1e-8 * hi)
    t = (np.arange(count) + 0.5) / count
    p = lo * (hi / lo) ** t
    return [(p_j, -p_j) for p_j in p]


def translated_adi_shifts(interval_k, count, z):
    """Shifts for the node equation ((z/2)I - K) X + X ((z/2)I - K) = C.

    The real ladder p_j over spec(K) is translated by z/2 on both sides:
    (alpha_j, beta_j) = (z/2 - p_j, p_j - z/2). Only sound when the two
    coefficient spectra are separated, i.e. Re(z) < 2 min spec(K).
    """
    base = adi_shifts(interval_k, interval_k, count)
    return [(z / 2.0 - p, p - z / 2.0) for p, _ in base]


def adi_solve(Ac, Bc, F, G, shifts, tol=1e-5, max_iter=None):
    """Factored ADI for the two-term equation Ac X + X Bc^T = F G^T.

    One step per shift pair (alpha, beta): with A = Ac and B = -Bc^T the
    updates are Z = (A - beta I)^{-1} F, Y = (B^T - alpha I)^{-1} G =
    -(Bc + alpha I)^{-1} G, X += (beta - alpha) Z Y^T, and the rhs factors
    contract, F += (beta - alpha) Z, G -= (beta - alpha) Y, so the residual
    is exactly the current F G^T. Shifts are cycled when max_iter exceeds
    their number; stops early once the relative residual reaches tol. The
    solution rank grows by the rhs rank each step (no compression here).
    """
    if not shifts:
        raise OutOfRange("adi_solve: needs at least one shift pair")
    if max_iter is None:
        max_iter = len(shifts)
    dtype = np.result_type(
        Ac.dtype, Bc.dtype, F.dtype, G.dtype, *(np.asarray(s).dtype for s in shifts[0])
    )
    n_hat, n_til = Ac.shape[0], Bc.shape[0]
    eye_a = np.eye(n_hat)
    eye_b = np.eye(n_til)
    Fc = F.astype(dtype)
    Gc = G.astype(dtype)
    Xh = np.zeros((n_hat, 0), dtype=dtype)
    Xt = np.zeros((n_til, 0), dtype=dtype)
    bnorm = pair_norm(Fc, Gc)
    rel = 1.0
    solvers = {}
    it = 0
    for it in range(1, max_iter + 1):
        alpha, beta = shifts[(it - 1) % len(shifts)]
        key_a = ("a", beta)
        key_b = ("b", alpha)
        if key_a not in solvers:
            solvers[key_a] = _shifted_solver(Ac - beta * eye_a)
        if key_b not in solvers:
            solvers[key_b] = _shifted_solver(Bc + alpha * eye_b)
        Z = solvers[key_a](Fc)
        Y = -solvers[key_b](Gc)
        c = beta - alpha
        Xh = np.hstack([Xh, c * Z])
        Xt = np.hstack([Xt, Y])
        Fc = Fc + c * Z
        Gc = Gc - c * Y
        rel = pair_norm(Fc, Gc) / bnorm
        if rel <= tol:
            break
    return FactoredSolution(Xh, Xt, rel, it, converged=rel <= tol)


# ---------------------------------------------------------------------------
# preconditioners for the multiterm BiCGstab

# dense SVD below this size; randomized range finder above
_DENSE_SVD_MAX = 600


def _compress_dense(X, tol, r_max, rng):
    """Split a dense matrix into a balanced low-rank pair."""
    n1, n2 = X.shape
    if max(n1, n2) <= _DENSE_SVD_MAX:
        U, s, Vh = svd_trunc(X, tol, r_max)
    else:
        # randomized range finder at the rank cap, then exact SVD of the
        # projected core; fine for preconditioning purposes
        m = min(r_max + 8, n2, n1)
        Y = X @ rng.standard_normal((n2, m))
        Q, _ = np.linalg.qr(Y, mode="reduced")
        U, s, Vh = svd_trunc(Q.conj().T @ X, tol, r_max)
        U = Q @ U
    sq = np.sqrt(s)
    return U * sq, Vh.T * sq


class EigenbasisPreconditioner:
    """Exact inverse of the two-term part via eigendecompositions of K.

    For Acoef = (z/2) I - K_hat and Bcoef = (z/2) I - K_til the map
    X -> Acoef X + X Bcoef^T is diagonal in the eigenbases: with K = Q L Q^T
    the inverse is Q_hat ((Q_hat^T C Q_til) / D) Q_til^T, D_ij = z -
    lambda_hat_i - lambda_til_j. Build once per K pair and share across
    nodes and columns; ``solve_pair`` is pure and thread-safe.
    """

    def __init__(self, K_hat, K_til=None):
        self.lam_hat, self.Q_hat = scipy.linalg.eigh(np.asarray(K_hat))
        if K_til is None or K_til is K_hat or np.array_equal(K_til, K_hat):
            self.lam_til, self.Q_til = self.lam_hat, self.Q_hat
        else:
            self.lam_til, self.Q_til = scipy.linalg.eigh(np.asarray(K_til))

    @classmethod
    def from_problem(cls, problem):
        K_hat, K_til = problem.real_symmetric_parts()
        return cls(K_hat, K_til)

    def solve_pair(self, problem, F, G, tol, r_max, rng):
        z = problem.z
        D = z - self.lam_hat[:, None] - self.lam_til[None, :]
        if np.min(np.abs(D)) == 0.0:
            raise SingularShiftedSolve("eigenbasis preconditioner: z hits the sum spectrum")
        W = (self.Q_hat.T @ F) @ (self.Q_til.T @ G).T / D
        Fp, Gp = _compress_dense(W, tol, r_max, rng)
        return self.Q_hat @ Fp, self.Q_til @ Gp


class AdiPreconditioner:
    """A few translated-real-ladder ADI steps on the two-term part.

    ``interval`` encloses spec(K) (Gershgorin bounds are fine). Sound only
    while Re(z) < 2 min spec(K); see the module docstring.
    """

    def __init__(self, interval, iterations):
        self.interval = (float(interval[0]), float(interval[1]))
        self.iterations = int(iterations)

    def solve_pair(self, problem, F, G, tol, r_max, rng):
        shifts = translated_adi_shifts(self.interval, self.iterations, problem.z)
        sol = adi_solve(problem.Acoef, problem.Bcoef, F, G, shifts, tol=0.0)
        return pair_truncate(sol.Xhat, sol.Xtil, tol, r_max)


class _IdentityPreconditioner:
    def solve_pair(self, problem, F, G, tol, r_max, rng):
        return F, G


def _make_precond(precond, problem, precond_iter):
    if precond is None:
        return _IdentityPreconditioner()
    if precond == "eig2":
        return EigenbasisPreconditioner.from_problem(problem)
    if precond == "adi":
        from .problems import gershgorin_interval

        K_hat, _ = problem.real_symmetric_parts()
        return AdiPreconditioner(gershgorin_interval(K_hat), precond_iter)
    if hasattr(precond, "solve_pair"):
        return precond
    raise OutOfRange(f"bicgstab_multiterm: unknown preconditioner {precond!r}")


# ---------------------------------------------------------------------------
# truncated BiCGstab on factored pairs


def bicgstab_multiterm(
    problem,
    precond="eig2",
    precond_iter=8,
    tol=1e-6,
    max_iter=200,
    rank_cap=90,
    trunc_tol=None,
    replace_every=10,
    seed=0,
):
    """Preconditioned BiCGstab on factored pairs with rank truncation.

    Every recombination is recompressed to ``trunc_tol`` (default
    0.1 * tol) and ``rank_cap``. Because truncation makes the recursion
    residual drift, the true factored residual is recomputed every
    ``replace_every`` iterations and at every claimed convergence; the
    returned ``achieved_residual`` is always a true one. On a rho/omega
    breakdown the iteration restarts once from the current iterate with a
    fresh random shadow pair before raising Breakdown. Reaching max_iter
    returns the best iterate flagged ``converged=False``.
    """
    if rank_cap < problem.F.shape[1]:
        raise OutOfRange("bicgstab_multiterm: rank_cap below rhs rank")
    trunc_tol = 0.1 * tol if trunc_tol is None else trunc_tol
    M = _make_precond(precond, problem, precond_iter)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))

    dtype = complex if any(
        np.iscomplexobj(a)
        for a in (problem.Acoef, problem.Bcoef, problem.F, problem.G, np.asarray(problem.z))
    ) else float
    bF = problem.F.astype(dtype)
    bG = problem.G.astype(dtype)
    bnorm = pair_norm(bF, bG)
    n_hat, n_til = problem.n_hat, problem.n_til
    xF = np.zeros((n_hat, 0), dtype=dtype)
    xG = np.zeros((n_til, 0), dtype=dtype)
    if bnorm == 0.0:
        return FactoredSolution(xF, xG, 0.0, 0, converged=True)

    def true_residual(xF, xG):
        """b - L(x) recompressed tightly; returns (rF, rG, relnorm)."""
        if xF.shape[1] == 0:
            return bF.copy(), bG.copy(), 1.0
        lF, lG = problem.apply_pair(xF, xG)
        rF = np.hstack([bF, lF])
        rG = np.hstack([bG, -lG])
        rF, rG = pair_truncate(rF, rG, 1e-16, 4 * rank_cap)
        return rF, rG, pair_norm(rF, rG) / bnorm

    rF, rG = bF.copy(), bG.copy()
    r0F, r0G = rF, rG
    rho = alpha = omega = 1.0 + 0j if dtype is complex else 1.0
    vF = vG = pF = pG = None
    restarted = False
    best = (xF, xG, 1.0)
    tiny = 1e-290
    it = 0
    fresh = True  # p-direction must be rebuilt from r

    while it < max_iter:
        it += 1
        rho_new = pair_inner(r0F, r0G, rF, rG)
        if abs(rho_new) < tiny or (not fresh and (abs(rho) < tiny or abs(omega) < tiny)):
            # shadow direction collapsed: restart once from the current
            # iterate with a random rank-1 shadow pair
            if restarted:
                raise Breakdown(f"bicgstab_multiterm: rho/omega underflow at iteration {it}")
            restarted = True
            rF, rG, _ = true_residual(xF, xG)
            r0F = rng.standard_normal((n_hat, 1)).astype(dtype)
            r0G = rng.standard_normal((n_til, 1)).astype(dtype)
            fresh = True
            rho_new = pair_inner(r0F, r0G, rF, rG)
            if abs(rho_new) < tiny:
                raise Breakdown("bicgstab_multiterm: restart shadow also degenerate")
        if fresh:
            pF, pG = rF, rG
            fresh = False
        else:
            beta = (rho_new / rho) * (alpha / omega)
            pF = np.hstack([rF, beta * pF, -beta * omega * vF])
            pG = np.hstack([rG, pG, vG])
            pF, pG = pair_truncate(pF, pG, trunc_tol, rank_cap)
        rho = rho_new
        phF, phG = M.solve_pair(problem, pF, pG, trunc_tol, rank_cap, rng)
        vF, vG = problem.apply_pair(phF, phG)
        vF, vG = pair_truncate(vF, vG, trunc_tol, rank_cap)
        denom = pair_inner(r0F, r0G, vF, vG)
        if abs(denom) < tiny:
            if restarted:
                raise Breakdown("bicgstab_multiterm: alpha denominator underflow")
            restarted = True
            rF, rG, _ = true_residual(xF, xG)
            r0F = rng.standard_normal((n_hat, 1)).astype(dtype)
            r0G = rng.standard_normal((n_til, 1)).astype(dtype)
            fresh = True
            continue
        alpha = rho / denom
        sF = np.hstack([rF, -alpha * vF])
        sG = np.hstack([rG, vG])
        sF, sG = pair_truncate(sF, sG, trunc_tol, rank_cap)
        if pair_norm(sF, sG) / bnorm <= tol:
            # half-step exit: t would vanish and poison omega
            xF = np.hstack([xF, alpha * phF])
            xG = np.hstack([xG, phG])
            xF, xG = pair_truncate(xF, xG, trunc_tol, rank_cap)
            rF, rG, rel = true_residual(xF, xG)
            if rel <= tol:
                return FactoredSolution(xF, xG, rel, it, converged=True)
            if rel < best[2]:
                best = (xF, xG, rel)
            fresh = True
            continue
        shF, shG = M.solve_pair(problem, sF, sG, trunc_tol, rank_cap, rng)
        tF, tG = problem.apply_pair(shF, shG)
        tF, tG = pair_truncate(tF, tG, trunc_tol, rank_cap)
        tt = pair_inner(tF, tG, tF, tG)
        if abs(tt) < tiny:
            raise Breakdown("bicgstab_multiterm: t vanished")
        omega = pair_inner(tF, tG, sF, sG) / tt
        xF = np.hstack([xF, alpha * phF, omega * shF])
        xG = np.hstack([xG, phG, shG])
        xF, xG = pair_truncate(xF, xG, trunc_tol, rank_cap)
        rF = np.hstack([sF, -omega * tF])
        rG = np.hstack([sG, tG])
        rF, rG = pair_truncate(rF, rG, trunc_tol, rank_cap)
        claimed = pair_norm(rF, rG) / bnorm
        if claimed <= tol or it % replace_every == 0:
            rF, rG, rel = true_residual(xF, xG)
            if rel <= tol:
                return FactoredSolution(xF, xG, rel, it, converged=True)
            if rel < best[2]:
                best = (xF, xG, rel)

    _, _, rel_now = true_residual(xF, xG)
    if rel_now > best[2]:
        xF, xG, rel_now = best
    return FactoredSolution(xF, xG, rel_now, max_iter, converged=False)
