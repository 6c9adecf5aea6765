"""
Dual certificate of global optimality.

At a first-order critical point X of the lifted problem, S = L - blockdiag(Lambda)
satisfies X S = 0. X is globally optimal iff S is positive semidefinite; the
known kernel (row space of X and the translation gauge) is deflated before
looking for the smallest remaining eigenvalue.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from config.settings import settings
from core import stiefel
from core.quadratic import ConnectionLaplacian, LiftedState, cost, half_gradient
from models.errors import DimensionMismatch, StationarityViolation
from models.schemas import CertificateSummary, Verdict
from utils.logger import get_logger

logger = get_logger("certifier")


@dataclass
class DualMatrix:
    """Dual certificate matrix S with the scale of the Laplacian it came from."""
    S: sp.csr_matrix
    laplacian_inf_norm: float
    d: int
    multipliers: np.ndarray

    @property
    def size(self) -> int:
        return self.S.shape[0]


@dataclass
class Certificate:
    """Certificate verdict; escape_eigvec is set iff the verdict is not_certified."""
    verdict: Verdict
    lambda_small: np.ndarray
    lambda_d_plus_1: float
    tol_used: float
    diagnostic: str = ""
    escape_eigvec: Optional[np.ndarray] = None

    @property
    def certified(self) -> bool:
        return self.verdict == Verdict.CERTIFIED

    def summary(self) -> CertificateSummary:
        return CertificateSummary(
            verdict=self.verdict,
            lambda_small=[float(v) for v in self.lambda_small],
            lambda_d_plus_1=float(self.lambda_d_plus_1),
            tol_used=float(self.tol_used),
            diagnostic=self.diagnostic,
        )


def indeterminate(diagnostic: str) -> Certificate:
    return Certificate(
        verdict=Verdict.INDETERMINATE,
        lambda_small=np.zeros(0),
        lambda_d_plus_1=float("nan"),
        tol_used=0.0,
        diagnostic=diagnostic,
    )


def assemble_dual(L: ConnectionLaplacian, X: LiftedState, grad_tol: Optional[float] = None) -> DualMatrix:
    """S = L - blockdiag(Lambda) with Lambda_i = sym(Y_i^T (X L)_{Y_i})."""
    if X.matrix.shape[1] != L.size:
        raise DimensionMismatch(f"State has {X.matrix.shape[1]} columns, Laplacian has {L.size}")
    d = L.d
    G = half_gradient(L.matrix, X.matrix)
    grad_norm = float(np.linalg.norm(2.0 * stiefel.project_tangent(X.matrix, G, d)))
    f = cost(L, X)
    tolerance = max(settings.STATIONARITY_TOL_REL * (1.0 + f), grad_tol or 0.0)
    if grad_norm > tolerance:
        raise StationarityViolation(f"Gradient norm {grad_norm:.3e} exceeds {tolerance:.3e}")

    Lam = stiefel.symmetric_multipliers(X.matrix, G, d)
    n = X.num_nodes
    base = (np.arange(n) * (d + 1))[:, None, None]
    rows = np.broadcast_to(base + np.arange(d)[None, :, None], (n, d, d))
    cols = np.broadcast_to(base + np.arange(d)[None, None, :], (n, d, d))
    blockdiag = sp.coo_matrix((Lam.reshape(-1), (rows.reshape(-1), cols.reshape(-1))), shape=(L.size, L.size))
    S = (L.matrix - blockdiag.tocsr()).tocsr()
    return DualMatrix(S=S, laplacian_inf_norm=L.inf_norm, d=d, multipliers=Lam)


def _kernel_basis(X: LiftedState) -> np.ndarray:
    """Orthonormal basis of span(rows of X) plus the translation-gauge vector."""
    d = X.d
    gauge = np.zeros(X.matrix.shape[1])
    gauge[d::d + 1] = 1.0
    return sla.orth(np.column_stack([X.matrix.T, gauge]))


def verify(dual: DualMatrix, X: LiftedState, tol_rel: Optional[float] = None) -> Certificate:
    """Decide whether S is PSD up to tol_rel * ||L||_inf."""
    if X.matrix.shape[1] != dual.size:
        raise DimensionMismatch(f"State has {X.matrix.shape[1]} columns, dual matrix has {dual.size}")
    tol_rel = settings.CERTIFICATE_TOL_REL if tol_rel is None else tol_rel
    tol = tol_rel * dual.laplacian_inf_norm
    S = dual.S
    N = dual.size
    Q = _kernel_basis(X)
    kernel_ritz = np.linalg.eigvalsh(Q.T @ (S @ Q))[:dual.d]
    shift = float(abs(S).sum(axis=1).max()) if S.nnz else 0.0

    if Q.shape[1] >= N:
        lam, vec, diagnostic = shift, None, "empty complement"
    elif N <= settings.DENSE_EIGEN_MAX_DIM:
        lam, vec = _dense_smallest(S.toarray(), Q, shift)
        diagnostic = "dense"
    else:
        try:
            lam, vec = _lanczos_smallest(S, Q, shift, maxiter=10 * X.num_nodes)
            diagnostic = "lanczos"
        except spla.ArpackNoConvergence:
            logger.warning(f"Lanczos did not converge within {10 * X.num_nodes} iterations")
            return Certificate(
                verdict=Verdict.INDETERMINATE,
                lambda_small=np.sort(kernel_ritz),
                lambda_d_plus_1=float("nan"),
                tol_used=tol,
                diagnostic="lanczos did not converge",
            )

    lambda_small = np.sort(np.append(kernel_ritz, lam))
    if lam > tol:
        verdict = Verdict.CERTIFIED
    elif lam < -tol:
        verdict = Verdict.NOT_CERTIFIED
    else:
        verdict = Verdict.INDETERMINATE
    logger.debug(f"Certificate: lambda={lam:.6e}, tol={tol:.3e}, verdict={verdict.value} ({diagnostic})")
    return Certificate(
        verdict=verdict,
        lambda_small=lambda_small,
        lambda_d_plus_1=float(lam),
        tol_used=tol,
        diagnostic=diagnostic,
        escape_eigvec=vec if verdict == Verdict.NOT_CERTIFIED else None,
    )


def _dense_smallest(S: np.ndarray, Q: np.ndarray, shift: float):
    """Smallest eigenpair of S restricted to the complement of span(Q)."""
    P = np.eye(S.shape[0]) - Q @ Q.T
    B = P @ S @ P + (shift + 1.0) * (Q @ Q.T)
    B = 0.5 * (B + B.T)
    w, V = sla.eigh(B, subset_by_index=[0, 0])
    return float(w[0]), V[:, 0]


def _lanczos_smallest(S: sp.csr_matrix, Q: np.ndarray, shift: float, maxiter: int):
    """Largest eigenpair of P (shift I - S) P via ARPACK, mapped back to S."""
    N = S.shape[0]

    def project(v: np.ndarray) -> np.ndarray:
        return v - Q @ (Q.T @ v)

    def matvec(v: np.ndarray) -> np.ndarray:
        v = project(np.asarray(v).reshape(-1))
        return project(shift * v - S @ v)

    operator = spla.LinearOperator((N, N), matvec=matvec, dtype=float)
    v0 = project(np.random.default_rng(0).normal(size=N))
    w, V = spla.eigsh(operator, k=1, which="LA", maxiter=max(maxiter, 10), v0=v0)
    vec = project(V[:, 0])
    vec /= np.linalg.norm(vec)
    return float(shift - w[0]), vec
