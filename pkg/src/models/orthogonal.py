"""
Gram-Schmidt orthonormalization for OTE relation blocks
"""
from typing import Tuple

import numpy as np
import structlog

from src.errors import DegenerateMatrixError

logger = structlog.get_logger(__name__)

RESIDUAL_TOLERANCE = 1e-8
PERTURBATION_SCALE = 1e-6


def _modified_gram_schmidt(matrices: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column-wise Gram-Schmidt over a stack of square matrices

    Returns (Q, R, smallest residual norm per matrix) with matrices = Q @ R and
    R upper triangular with a positive diagonal.
    """
    work = np.array(matrices, dtype=np.float64, copy=True)
    size = work.shape[-1]
    q = np.zeros_like(work)
    r = np.zeros_like(work)
    smallest = np.full(work.shape[:-2], np.inf)
    for j in range(size):
        column = work[..., :, j]
        norm = np.sqrt(np.sum(column * column, axis=-1))
        smallest = np.minimum(smallest, norm)
        r[..., j, j] = norm
        safe = np.where(norm < RESIDUAL_TOLERANCE, 1.0, norm)
        q[..., :, j] = column / safe[..., None]
        for k in range(j + 1, size):
            projection = np.sum(q[..., :, j] * work[..., :, k], axis=-1)
            r[..., j, k] = projection
            work[..., :, k] -= projection[..., None] * q[..., :, j]
    return q, r, smallest


def gram_schmidt_qr(matrices: np.ndarray, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
    """phi(M) and its triangular factor for one matrix or a stack of matrices

    A matrix whose residual column norm falls below RESIDUAL_TOLERANCE is
    perturbed once with seeded noise and retried; a second failure raises.
    """
    matrices = np.asarray(matrices, dtype=np.float64)
    if matrices.ndim < 2 or matrices.shape[-1] != matrices.shape[-2] or matrices.shape[-1] < 1:
        raise ValueError(f"Expected square matrices, got shape {matrices.shape}")
    q, r, smallest = _modified_gram_schmidt(matrices)
    degenerate = smallest < RESIDUAL_TOLERANCE
    if np.any(degenerate):
        count = int(np.count_nonzero(degenerate))
        logger.warning("Perturbing rank-deficient matrices", count=count)
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal(matrices.shape) * PERTURBATION_SCALE
        retried = np.where(degenerate[..., None, None], matrices + noise, matrices)
        q, r, smallest = _modified_gram_schmidt(retried)
        if np.any(smallest < RESIDUAL_TOLERANCE):
            raise DegenerateMatrixError(
                f"Gram-Schmidt failed on {count} rank-deficient matrices after perturbation")
    return q, r


def gram_schmidt(matrix: np.ndarray, seed: int = 0) -> np.ndarray:
    """phi(M): orthonormal columns spanning the columns of M"""
    return gram_schmidt_qr(matrix, seed)[0]


def gram_schmidt_backward(q: np.ndarray, r: np.ndarray, grad_q: np.ndarray) -> np.ndarray:
    """Pull a gradient w.r.t. phi(M) back to M

    For square M = QR with dQ = Q @ Omega (Omega antisymmetric), the adjoint is
    Q @ tril(Q^T G - G^T Q, -1) @ R^{-T}.
    """
    b = np.swapaxes(q, -1, -2) @ grad_q
    c = np.tril(b - np.swapaxes(b, -1, -2), -1)
    left = q @ c
    # left @ R^{-T} == solve(R, left^T)^T
    return np.swapaxes(np.linalg.solve(r, np.swapaxes(left, -1, -2)), -1, -2)
