"""Block shift-and-invert Lanczos for the smallest eigenpairs of a symmetric pencil."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cholesky import NotPositiveDefiniteError, SparseCholesky
from .dense import symmetric_eigh
from .spectrum import Spectrum


class InternalSolverError(RuntimeError):
    pass


@dataclass
class SolverConfig:
    """Parameters of :func:`solve_smallest`.

    ``shift`` is expressed in units of mean(diag(A) / diag(M)); the absolute
    shift is ``shift`` times that mean and must be negative.
    """

    k: int = 6
    tol: float = 1e-10
    shift: float = -0.01
    max_iterations: int = 300
    block_size: int = 4
    seed: int = 0
    max_basis: int | None = None

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.shift < 0:
            raise ValueError("shift must be negative")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def _m_orthonormalize(W, Q, MQ, M, rng, max_passes: int = 6):
    """Block of M-orthonormal columns spanning W minus its M-projection onto Q.

    Two classical Gram-Schmidt passes against Q, then SVQB within the block.
    Columns that collapse (numerically inside span Q or dependent on the
    rest of the block) are replaced by random vectors and the pass repeats.
    """
    n, b = W.shape
    for _ in range(max_passes):
        before = np.sqrt(np.einsum("ij,ij->j", W, M @ W))
        for _ in range(2):
            if Q.shape[1]:
                W = W - Q @ (MQ.T @ W)
        MW = M @ W
        G = W.T @ MW
        G = 0.5 * (G + G.T)
        after = np.sqrt(np.clip(np.diag(G), 0.0, None))
        lost = ~(after > 1e-10 * np.maximum(before, 1e-300))
        if np.any(lost):
            W = W.copy()
            W[:, lost] = rng.standard_normal((n, int(lost.sum())))
            continue
        D = 1.0 / after
        lam, V = symmetric_eigh(D[:, None] * G * D[None, :])
        dependent = lam <= 1e-12 * lam[-1]
        if np.any(dependent):
            T = (D[:, None] * V[:, ~dependent]) / np.sqrt(lam[~dependent])
            W = np.hstack([W @ T, rng.standard_normal((n, int(dependent.sum())))])
            continue
        T = (D[:, None] * V) / np.sqrt(lam)
        W, MW = W @ T, MW @ T
        cross = np.abs(MQ.T @ W).max() if Q.shape[1] else 0.0
        if np.abs(W.T @ MW - np.eye(b)).max() < 1e-12 and cross < 1e-12:
            return W, MW
    raise InternalSolverError("could not extend the Krylov basis")


def _refine(Q, AQ, MQ, k):
    """Rayleigh-Ritz of (A, M) on span(Q); Q is M-orthonormal."""
    H = Q.T @ AQ
    theta, Y = symmetric_eigh(0.5 * (H + H.T))
    Y = Y[:, :k]
    X, AX, MX = Q @ Y, AQ @ Y, MQ @ Y
    lam = theta[:k]
    res = np.linalg.norm(AX - MX * lam, axis=0) / np.linalg.norm(MX, axis=0)
    return lam, X, res


def solve_smallest(A, M, config: SolverConfig | None = None) -> Spectrum:
    """The ``config.k`` smallest eigenpairs of A x = lam M x.

    A is symmetric positive semidefinite and M symmetric positive definite
    (both :class:`~killingfem.fem.SymSparseMatrix` or anything with ``@``,
    ``diagonal`` and ``to_csr``).  The operator (A - sigma M)^{-1} M is
    self-adjoint in the M inner product; its Krylov blocks are built with
    full M-reorthogonalization and a thick restart that keeps the leading
    Ritz vectors.  Reported pairs come from a final Rayleigh-Ritz step on
    (A, M) within the span of the wanted Ritz vectors.
    """
    cfg = config or SolverConfig()
    n = A.shape[0]
    if M.shape != A.shape:
        raise ValueError("A and M must have equal dimensions")
    k = min(cfg.k, n)
    b = min(cfg.block_size, n)
    dA, dM = A.diagonal(), M.diagonal()
    if np.any(dM <= 0):
        raise NotPositiveDefiniteError(int(np.argmin(dM)))
    scale = float(np.mean(dA / dM))
    sigma = cfg.shift * scale if scale > 0 else cfg.shift
    try:
        K = A.scaled_add(M, -sigma) if hasattr(A, "scaled_add") else A - sigma * M
        factor = SparseCholesky(K)
    except NotPositiveDefiniteError as exc:
        raise InternalSolverError(f"shifted matrix not positive definite (sigma={sigma})") from exc

    max_basis = min(cfg.max_basis or max(3 * k + 4 * b, 20 * b, 80), n)
    keep = min(max(k + b, max_basis // 2), max(max_basis - b, k))
    rng = np.random.default_rng(cfg.seed)

    Q = np.zeros((n, 0))
    MQ = np.zeros((n, 0))
    AQ = np.zeros((n, 0))
    OQ = np.zeros((n, 0))  # (A - sigma M)^{-1} M Q
    W, MW = _m_orthonormalize(rng.standard_normal((n, b)), Q, MQ, M, rng)
    lam, X, res = np.zeros(0), np.zeros((n, 0)), np.full(k, np.inf)
    converged = False
    it = 0
    while it < cfg.max_iterations:
        it += 1
        Q = np.hstack([Q, W])
        MQ = np.hstack([MQ, MW])
        AQ = np.hstack([AQ, A @ W])
        OQ = np.hstack([OQ, factor.solve(MW)])
        full = Q.shape[1] + b > max_basis
        if Q.shape[1] >= k and (full or it % 2 == 0 or Q.shape[1] == n):
            Hop = MQ.T @ OQ
            theta, Y = symmetric_eigh(0.5 * (Hop + Hop.T))
            Y = Y[:, ::-1]  # largest operator eigenvalues = smallest pencil eigenvalues
            m = min(keep, Q.shape[1])
            Z = Y[:, :m]
            lam, X, res = _refine(Q @ Z, AQ @ Z, MQ @ Z, k)
            if np.all(res <= cfg.tol) or Q.shape[1] == n:
                converged = bool(np.all(res <= cfg.tol))
                break
            if full:
                # the continuation block is the residual against the whole old basis
                nxt = OQ[:, -b:]
                for _ in range(2):
                    nxt = nxt - Q @ (MQ.T @ nxt)
                Q, AQ, MQ, OQ = Q @ Z, AQ @ Z, MQ @ Z, OQ @ Z
                W, MW = _m_orthonormalize(nxt, Q, MQ, M, rng)
                continue
        W, MW = _m_orthonormalize(OQ[:, -b:], Q, MQ, M, rng)
    if X.shape[1] < k:
        lam, X, res = _refine(Q, AQ, MQ, k)
    info = {"sigma": sigma, "basis": int(Q.shape[1]), "factor_nnz": factor.nnz}
    return Spectrum(np.asarray(lam), X, np.asarray(res), converged, it, info)
