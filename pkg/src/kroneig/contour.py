"""Rational-filter eigensolver for Kronecker-sum operators.

The filter is a quadrature discretization of the resolvent contour
integral: for nodes z_i and weights w_i on a circle, rho(lam) =
(1 / 2 pi i) sum_i w_i / (z_i - lam) approximates the indicator function
of the circle's interior, so rho(A) Omega approximately spans the
invariant subspace belonging to the enclosed eigenvalues. Each node
contributes one shifted linear solve; with a Khatri-Rao sketch column as
right-hand side that solve matricizes to a three-term Sylvester equation
handled by the truncated BiCGstab in .sylvester. Per sketch column the
node solutions are accumulated into one low-rank pair (conjugate node
pairs are folded into a single real contribution when the data is real),
the columns are assembled into a block low-rank subspace, and Ritz pairs
are extracted from the projected problem.

Desk-scale evaluators quantify the subspace quality independently of the
solver: structural_bound evaluates the angle bound driven by the filter
values and the sketched-basis pseudoinverse, tan_angle_B measures the
actual angle in a B-weighted geometry.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .blr import (
    BlockLowRank,
    add,
    apply_operator,
    block_inner,
    column_norms,
    orthonormalize_cholesky,
    orthonormalize_svd,
    right_multiply,
    truncate,
)
from .dense import cholesky, eig_sym_gen, two_norm
from .errors import (
    DegenerateSubspace,
    DimensionMismatch,
    GramNotSPD,
    KroneigError,
    OutOfRange,
    PoleHit,
    RankDeficient,
    RankOverflow,
    SizeOverflow,
    StructureMismatch,
)
from .sylvester import EigenbasisPreconditioner, MultitermSylvester, bicgstab_multiterm, pair_truncate

__all__ = [
    "RationalFilter",
    "EigenResult",
    "NodeSolverConfig",
    "RecompressConfig",
    "trapezoid_circle",
    "filter_eval",
    "node_problem",
    "contour_eigensolve",
    "structural_bound",
    "tan_angle_B",
]

# desk-scale ceiling for the dense bound/angle evaluators
_DESK_MAX = 2500


@dataclass(frozen=True)
class RationalFilter:
    """Quadrature nodes and weights of a rational filter on a circle.

    The filter value at lam is (1 / 2 pi i) sum_i weights[i] /
    (nodes[i] - lam); center and radius describe the contour so membership
    tests do not have to reconstruct it from the nodes.
    """

    nodes: np.ndarray
    weights: np.ndarray
    center: float
    radius: float

    def __post_init__(self):
        if self.nodes.shape != self.weights.shape or self.nodes.ndim != 1:
            raise DimensionMismatch("RationalFilter: nodes/weights must be equal-length 1-d")
        if self.nodes.size < 1:
            raise OutOfRange("RationalFilter: needs at least one node")

    @property
    def q(self):
        return self.nodes.size


def trapezoid_circle(center, radius, q):
    """Midpoint-offset trapezoidal rule on a circle.

    Node angles 2 pi (j + 1/2) / q keep every node off the real axis for
    even q (real-axis nodes sit near real spectra and make the shifted
    solves nearly singular); the weights make (1 / 2 pi i) sum w_j f(z_j)
    the trapezoidal approximation of the contour integral of f. Nodes come
    in conjugate pairs, so the filter is real on the real axis.
    """
    if q < 2:
        raise OutOfRange("trapezoid_circle: q must be >= 2")
    if radius <= 0:
        raise OutOfRange("trapezoid_circle: radius must be > 0")
    theta = 2.0 * np.pi * (np.arange(q) + 0.5) / q
    ring = np.exp(1j * theta)
    nodes = center + radius * ring
    weights = 2.0j * np.pi * radius * ring / q
    return RationalFilter(nodes, weights, float(center), float(radius))


def filter_eval(filt, lam):
    """Filter value rho(lam); lam may be a scalar or an array.

    Raises PoleHit when lam coincides with a quadrature node.
    """
    lam_arr = np.asarray(lam)
    denom = filt.nodes.reshape((-1,) + (1,) * lam_arr.ndim) - lam_arr[None]
    if np.any(denom == 0):
        raise PoleHit("filter_eval: lam coincides with a quadrature node")
    vals = np.sum(filt.weights.reshape(denom.shape[:1] + (1,) * lam_arr.ndim) / denom, axis=0)
    vals = vals / (2.0j * np.pi)
    if lam_arr.ndim == 0:
        return complex(vals)
    return vals


@dataclass
class EigenResult:
    """Approximate eigenpairs plus run bookkeeping.

    ritz_values ascending; ritz_vectors holds the matching columns in block
    low-rank form; residual_norms are ||A u - theta u||_2 with unit-norm u.
    inside_flags marks contour membership for the filter solver and
    per-pair convergence for the iterative solver. diagnostics is a plain
    dict (per-node solver reports, rank histories, failure records).
    """

    ritz_values: np.ndarray
    ritz_vectors: BlockLowRank
    residual_norms: np.ndarray
    inside_flags: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.ritz_values)
        if len(self.residual_norms) != k or len(self.inside_flags) != k:
            raise DimensionMismatch("EigenResult: per-pair lists must share length")


@dataclass(frozen=True)
class NodeSolverConfig:
    """Settings for the per-node BiCGstab solves."""

    tol: float = 1e-10
    max_iter: int = 200
    rank_cap: int = 90
    trunc_tol: float = 1e-15
    precond: str = "eig2"
    precond_iter: int = 8
    seed: int = 0


@dataclass(frozen=True)
class RecompressConfig:
    """Accumulation/assembly recompression: relative eps, hard rank cap."""

    eps: float = 1e-10
    r_max: int = 90


def _is_eye(M):
    return M.shape[0] == M.shape[1] and np.array_equal(M, np.eye(M.shape[0]))


def _split_schrodinger(A):
    """Split a Kronecker-sum operator into (K_hat, K_til, coupling pair).

    Terms with an identity tilde factor add into K_hat, terms with an
    identity hat factor into K_til; at most one general term may remain and
    becomes the coupling. Zero coupling matrices are returned when no such
    term exists.
    """
    K_hat = np.zeros((A.n_hat, A.n_hat))
    K_til = np.zeros((A.n_til, A.n_til))
    coupling = []
    for til, hat in A.terms:
        if _is_eye(til):
            K_hat = K_hat + hat
        elif _is_eye(hat):
            K_til = K_til + til
        else:
            coupling.append((til, hat))
    if len(coupling) > 1:
        raise StructureMismatch(
            f"contour solver needs at most one non-separable term, found {len(coupling)}"
        )
    if coupling:
        til_c, hat_c = coupling[0]
    else:
        til_c = np.zeros((A.n_til, A.n_til))
        hat_c = np.zeros((A.n_hat, A.n_hat))
    return K_hat, K_til, hat_c, til_c


def node_problem(A, z, F, G):
    """Matricized shifted system (z I - A) x = vec(F G^T) at one node.

    With A = I (x) K_hat + K_til (x) I + til_c (x) hat_c the system becomes
    ((z/2) I - K_hat) X + X ((z/2) I - K_til)^T - hat_c X til_c^T = F G^T.
    """
    K_hat, K_til, hat_c, til_c = _split_schrodinger(A)
    Acoef = (z / 2.0) * np.eye(A.n_hat) - K_hat
    Bcoef = (z / 2.0) * np.eye(A.n_til) - K_til
    return MultitermSylvester(Acoef, Bcoef, hat_c, til_c.T, F, G, z=z)


def _solve_node_column(A, z, F, G, precond, cfg, seed):
    problem = node_problem(A, z, F, G)
    return bicgstab_multiterm(
        problem,
        precond=precond,
        precond_iter=cfg.precond_iter,
        tol=cfg.tol,
        max_iter=cfg.max_iter,
        rank_cap=cfg.rank_cap,
        trunc_tol=cfg.trunc_tol,
        seed=seed,
    )


def contour_eigensolve(A, filt, sk, solver_cfg=None, recompress=None, threads=1):
    """Filtered-subspace eigensolver: solve, accumulate, assemble, project.

    For every quadrature node i and sketch column j the shifted system is
    solved in factored form and the weighted solutions are accumulated per
    column with periodic recompression; for real data only the upper
    half-plane nodes are solved and each contributes the folded real part
    of its conjugate pair. The accumulated columns are assembled into one
    block low-rank subspace (block-selector cores), truncated,
    orthonormalized (Cholesky with an SVD fallback), and the symmetrized
    projected pencil yields the Ritz pairs. A failed (node, column) solve
    is recorded and skipped; the column is flagged degraded but the solve
    grid keeps going.
    """
    cfg = solver_cfg if solver_cfg is not None else NodeSolverConfig()
    rec = recompress if recompress is not None else RecompressConfig()
    if sk.n_hat != A.n_hat or sk.n_til != A.n_til:
        raise DimensionMismatch(
            f"contour_eigensolve: sketch grid ({sk.n_hat}, {sk.n_til}) "
            f"vs operator ({A.n_hat}, {A.n_til})"
        )
    ell = sk.ell
    K_hat, K_til, _, _ = _split_schrodinger(A)
    shared_precond = (
        EigenbasisPreconditioner(K_hat, K_til) if cfg.precond == "eig2" else cfg.precond
    )

    real_data = not any(
        np.iscomplexobj(t) for pair in A.terms for t in pair
    ) and not np.iscomplexobj(sk.tilde) and not np.iscomplexobj(sk.hat)
    im_floor = 1e-14 * filt.radius
    if real_data:
        node_ids = [i for i in range(filt.q) if filt.nodes[i].imag > im_floor]
        real_ids = [i for i in range(filt.q) if abs(filt.nodes[i].imag) <= im_floor]
        node_ids = sorted(node_ids + real_ids)
    else:
        node_ids = list(range(filt.q))
    dtype = float if real_data else complex

    Lacc = [np.zeros((A.n_hat, 0), dtype=dtype) for _ in range(ell)]
    Racc = [np.zeros((A.n_til, 0), dtype=dtype) for _ in range(ell)]
    reports = []
    failures = []
    degraded = set()
    rank_history = []

    def run_cell(i, j):
        z = complex(filt.nodes[i])
        F = sk.scale * sk.hat[:, j : j + 1]
        G = sk.tilde[:, j : j + 1].copy()
        seed = int(np.random.SeedSequence((cfg.seed, i, j)).generate_state(1)[0])
        return _solve_node_column(A, z, F, G, shared_precond, cfg, seed)

    for i in node_ids:
        z = complex(filt.nodes[i])
        c = complex(filt.weights[i] / (2.0j * np.pi))
        if threads > 1 and ell > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [pool.submit(run_cell, i, j) for j in range(ell)]
            outcomes = []
            for f in futures:
                try:
                    outcomes.append(f.result())
                except KroneigError as exc:
                    outcomes.append(exc)
        else:
            outcomes = []
            for j in range(ell):
                try:
                    outcomes.append(run_cell(i, j))
                except KroneigError as exc:
                    outcomes.append(exc)
        for j, sol in enumerate(outcomes):
            if isinstance(sol, KroneigError):
                failures.append((i, j))
                degraded.add(j)
                reports.append(
                    {"node": i, "column": j, "iterations": 0, "residual": math.inf,
                     "converged": False, "error": str(sol)}
                )
                continue
            reports.append(
                {"node": i, "column": j, "iterations": sol.iterations,
                 "residual": sol.achieved_residual, "converged": sol.converged,
                 "rank": sol.rank}
            )
            if not sol.converged:
                degraded.add(j)
            if real_data and abs(z.imag) > im_floor:
                # fold the conjugate node: contribution 2 Re(c X) with
                # X = Xhat Xtil^T splits as [Re Xhat, Im Xhat] against
                # [2 Re(c Xtil), -2 Im(c Xtil)]
                cXt = c * sol.Xtil
                Ladd = np.hstack([np.real(sol.Xhat), np.imag(sol.Xhat)])
                Radd = np.hstack([2.0 * np.real(cXt), -2.0 * np.imag(cXt)])
            elif real_data:
                Ladd = np.real(sol.Xhat)
                Radd = np.real(c * sol.Xtil)
            else:
                Ladd = sol.Xhat
                Radd = c * sol.Xtil
            L = np.hstack([Lacc[j], Ladd])
            R = np.hstack([Racc[j], Radd])
            Lacc[j], Racc[j] = pair_truncate(L, R, rec.eps, rec.r_max)
        rank_history.append([Lacc[j].shape[1] for j in range(ell)])

    diagnostics = {
        "node_reports": reports,
        "failures": failures,
        "degraded_columns": sorted(degraded),
        "column_rank_history": rank_history,
        "nodes_solved": node_ids,
        "conjugate_economy": real_data,
        "grid_size": len(node_ids) * ell,
    }

    ranks = [L.shape[1] for L in Lacc]
    if max(ranks, default=0) == 0:
        empty = BlockLowRank.empty(A.n_hat, A.n_til, 0, dtype=dtype)
        diagnostics["subspace_dim"] = 0
        return EigenResult(np.zeros(0), empty, np.zeros(0), np.zeros(0, dtype=bool), diagnostics)

    r_tot = sum(ranks)
    U = np.hstack(Lacc)
    V = np.hstack([np.conj(R) for R in Racc])
    sigma = np.zeros((ell, r_tot, r_tot), dtype=dtype)
    off = 0
    for j, r in enumerate(ranks):
        sigma[j, off : off + r, off : off + r] = np.eye(r)
        off += r
    W = BlockLowRank(U, V, sigma)
    diagnostics["assembled_rank_pre"] = (W.r_hat, W.r_til)
    W = truncate(W, rec.eps, rec.r_max)
    diagnostics["assembled_rank_post"] = (W.r_hat, W.r_til)
    if W.r_hat > rec.r_max or W.r_til > rec.r_max:
        raise RankOverflow("contour_eigensolve: assembly exceeded the rank cap")

    try:
        W, _ = orthonormalize_cholesky(W)
        diagnostics["orthonormalization"] = "cholesky"
    except GramNotSPD:
        W, kept = orthonormalize_svd(W)
        diagnostics["orthonormalization"] = "svd"
        if kept == 0:
            diagnostics["subspace_dim"] = 0
            return EigenResult(
                np.zeros(0), W, np.zeros(0), np.zeros(0, dtype=bool), diagnostics
            )
    diagnostics["subspace_dim"] = W.ell

    AW = apply_operator(A, W)
    H = block_inner(W, AW)
    H = 0.5 * (H + H.conj().T)
    Gm = block_inner(W, W)
    Gm = 0.5 * (Gm + Gm.conj().T)
    theta, C = eig_sym_gen(H, Gm, W.ell)
    Wr = right_multiply(W, C)

    AWr = apply_operator(A, Wr)
    Rblk = add(AWr, right_multiply(Wr, np.diag(-theta)))
    res = column_norms(Rblk)
    inside = np.abs(theta - filt.center) < filt.radius * (1.0 + 1e-8)
    diagnostics["inside_count"] = int(np.count_nonzero(inside))
    return EigenResult(theta, Wr, res, inside, diagnostics)


# ---------------------------------------------------------------------------
# desk-scale subspace-quality evaluators


def structural_bound(Bmat, U, Uperp, lam_inside, lam_perp, filt, Omega, j):
    """Angle bound for the j-th filtered direction, sharp and split form.

    U and Uperp are the wanted/unwanted blocks of a jointly orthonormal
    eigenbasis scaled by the square root of the weight matrix (so the
    weight enters only through the inputs; Bmat is accepted for signature
    symmetry with tan_angle_B and dimension checks). lam_inside/lam_perp
    are the matching eigenvalues. Returns (sharp, split):

      sharp = || rho(lam_perp) * (Uperp^H Omega) (U^H Omega)^+ e_j ||_2
                / |rho(lam_inside[j])|
      split = max|rho(lam_perp)| / |rho(lam_inside[j])|
                * ||Omega||_2 * ||(Omega^H U)^+||_2

    split >= sharp always. Raises RankDeficient when U^H Omega loses full
    row rank (then the pseudoinverse no longer selects e_j exactly).
    """
    U = np.asarray(U)
    Uperp = np.asarray(Uperp)
    Omega = np.asarray(Omega)
    n, k = U.shape
    if n > _DESK_MAX:
        raise SizeOverflow(f"structural_bound: n={n} exceeds desk scale {_DESK_MAX}")
    if Uperp.shape[0] != n or Omega.shape[0] != n:
        raise DimensionMismatch("structural_bound: row counts differ")
    if len(lam_inside) != k or len(lam_perp) != Uperp.shape[1]:
        raise DimensionMismatch("structural_bound: eigenvalue counts do not match blocks")
    if Bmat is not None and not (isinstance(Bmat, str) and Bmat == "identity"):
        if np.asarray(Bmat).shape != (n, n):
            raise DimensionMismatch("structural_bound: Bmat must be n x n")
    if not 0 <= j < k:
        raise OutOfRange(f"structural_bound: j={j} outside 0..{k - 1}")
    ell = Omega.shape[1]
    if ell < k:
        raise RankDeficient(f"structural_bound: ell={ell} < k={k}")
    UtO = U.conj().T @ Omega
    s = np.linalg.svd(UtO, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= max(UtO.shape) * np.finfo(float).eps * s[0]:
        raise RankDeficient("structural_bound: U^H Omega is numerically row rank deficient")
    rho_j = abs(filter_eval(filt, float(lam_inside[j])))
    if rho_j == 0.0:
        return math.inf, math.inf
    rho_perp = filter_eval(filt, np.asarray(lam_perp, dtype=float))
    coef = np.linalg.pinv(UtO)[:, j]
    sharp = float(np.linalg.norm(rho_perp * ((Uperp.conj().T @ Omega) @ coef)) / rho_j)
    split = float(np.max(np.abs(rho_perp)) / rho_j * two_norm(Omega) / s[-1])
    return sharp, split


def tan_angle_B(u, Z, Bmat=None):
    """Tangent of the principal angle between u and span(Z), B-weighted.

    The weighted geometry is realized through the Cholesky factor of Bmat
    (identity when Bmat is None or the "identity" tag): angles of L^H x in
    the Euclidean sense equal B-angles of x. Returns +inf when u is
    B-orthogonal to the subspace; raises DegenerateSubspace when Z is
    numerically rank deficient.
    """
    u = np.asarray(u).reshape(-1)
    Z = np.asarray(Z)
    if Z.ndim != 2 or Z.shape[0] != u.size:
        raise DimensionMismatch(f"tan_angle_B: u has {u.size} rows, Z has shape {Z.shape}")
    if np.linalg.norm(u) == 0.0:
        raise OutOfRange("tan_angle_B: u must be nonzero")
    if Bmat is None or (isinstance(Bmat, str) and Bmat == "identity"):
        ut, Zt = u, Z
    else:
        L = cholesky(np.asarray(Bmat))
        ut = L.conj().T @ u
        Zt = L.conj().T @ Z
    Q, Rz = np.linalg.qr(Zt, mode="reduced")
    d = np.abs(np.diag(Rz))
    if d.size == 0 or d.max() == 0.0 or d.min() <= max(Zt.shape) * np.finfo(float).eps * d.max():
        raise DegenerateSubspace("tan_angle_B: Z is numerically rank deficient")
    coef = Q.conj().T @ ut
    proj = float(np.linalg.norm(coef))
    perp = float(np.linalg.norm(ut - Q @ coef))
    if proj == 0.0:
        return math.inf
    return perp / proj
