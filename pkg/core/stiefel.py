"""
Product-of-Stiefel geometry for lifted pose states.

A lifted state is an r x (d+1)n matrix whose column block i is [Y_i | p_i]:
Y_i (r x d) has orthonormal columns, p_i (r) is unconstrained.
"""
from typing import Tuple

import numpy as np

from utils.lie import sym


def split_blocks(M: np.ndarray, d: int) -> Tuple[np.ndarray, np.ndarray]:
    """View a state as (n, r, d) frames and (n, r) translations (copies)."""
    r = M.shape[0]
    blocks = M.reshape(r, -1, d + 1).transpose(1, 0, 2)
    return blocks[..., :d].copy(), blocks[..., d].copy()


def join_blocks(Y: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Inverse of split_blocks."""
    n, r, _ = Y.shape
    blocks = np.concatenate([Y, p[..., None]], axis=2)
    return blocks.transpose(1, 0, 2).reshape(r, -1)


def symmetric_multipliers(M: np.ndarray, G: np.ndarray, d: int) -> np.ndarray:
    """Per-node sym(Y_i^T G_i) over the rotation columns, shape (n, d, d)."""
    Y, _ = split_blocks(M, d)
    GY, _ = split_blocks(G, d)
    return sym(np.einsum("nrd,nre->nde", Y, GY))


def project_tangent(M: np.ndarray, Z: np.ndarray, d: int) -> np.ndarray:
    """Orthogonal projection of an ambient direction onto the tangent space at M."""
    Y, _ = split_blocks(M, d)
    ZY, Zp = split_blocks(Z, d)
    YtZ = sym(np.einsum("nrd,nre->nde", Y, ZY))
    ZY = ZY - np.einsum("nrd,nde->nre", Y, YtZ)
    return join_blocks(ZY, Zp)


def qr_orthonormalize(A: np.ndarray) -> np.ndarray:
    """Q factor with positive-diagonal convention for a stack of (r, d) matrices."""
    Q, R = np.linalg.qr(A)
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return Q * signs[:, None, :]


def retract(M: np.ndarray, xi: np.ndarray, d: int) -> np.ndarray:
    """QR retraction of M + xi back onto the manifold."""
    Y, p = split_blocks(M + xi, d)
    return join_blocks(qr_orthonormalize(Y), p)


def random_state(rng: np.random.Generator, r: int, d: int, n: int) -> np.ndarray:
    """Uniformly random orthonormal frames and standard-normal lifted translations."""
    Y = qr_orthonormalize(rng.normal(size=(n, r, d)))
    p = rng.normal(size=(n, r))
    return join_blocks(Y, p)


def orthonormality_error(M: np.ndarray, d: int) -> float:
    """Largest |Y_i^T Y_i - I| entry over all nodes."""
    Y, _ = split_blocks(M, d)
    if Y.shape[0] == 0:
        return 0.0
    gram = np.einsum("nrd,nre->nde", Y, Y)
    return float(np.max(np.abs(gram - np.eye(d))))


def inner(A: np.ndarray, B: np.ndarray) -> float:
    """Frobenius inner product."""
    return float(np.sum(A * B))
