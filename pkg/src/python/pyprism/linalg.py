"""Small dense linear algebra helpers shared by the estimators."""

import logging
from typing import Tuple

import numpy as np
import scipy.linalg as la

from .errors import FactorizationError, RankDeficiencyError

logger = logging.getLogger(__name__)

RANK_TOL = 1e-8


def pinv(a: np.ndarray) -> np.ndarray:
    """
    Moore-Penrose pseudo-inverse via SVD.

    Singular values below ``max(rows, cols) * eps * s_max`` are treated as zero.
    """
    a = np.asarray(a, dtype=float)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if s.size == 0:
        return np.zeros(a.T.shape)
    cutoff = max(a.shape) * np.finfo(float).eps * s[0]
    large = s > cutoff
    s_inv = np.zeros_like(s)
    s_inv[large] = 1.0 / s[large]
    return (vt.T * s_inv) @ u.T


def smallest_singular_value(a: np.ndarray) -> float:
    s = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    return float(s[-1]) if s.size else 0.0


def has_full_column_rank(a: np.ndarray, rank_tol: float = RANK_TOL) -> bool:
    a = np.asarray(a, dtype=float)
    if a.shape[0] < a.shape[1]:
        return False
    return smallest_singular_value(a) > rank_tol


def require_full_column_rank(a: np.ndarray, what: str, rank_tol: float = RANK_TOL) -> None:
    if not has_full_column_rank(a, rank_tol):
        raise RankDeficiencyError(
            f"{what} of shape {np.shape(a)} is not full column rank "
            f"(smallest singular value <= {rank_tol})"
        )


def spd_solve(a: np.ndarray, b: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Solve ``a x = b`` for symmetric positive-definite ``a`` with a Cholesky factorization."""
    try:
        factor = la.cho_factor(a, lower=True, check_finite=True)
    except (la.LinAlgError, ValueError) as exc:
        smallest = float(np.linalg.eigvalsh(0.5 * (a + a.T))[0]) if np.all(np.isfinite(a)) else None
        raise FactorizationError(
            f"Cholesky factorization of {what} failed (smallest eigenvalue {smallest})",
            smallest_eigenvalue=smallest,
        ) from exc
    return la.cho_solve(factor, b, check_finite=False)


def psd_sqrt(c: np.ndarray) -> np.ndarray:
    """
    Symmetric square root of a positive-semidefinite matrix.

    Eigenvalues below ``size * eps * max_eigenvalue`` are set to zero so the root
    keeps the null space of ``c`` exactly.
    """
    w, v = np.linalg.eigh(symmetrize(c))
    cutoff = c.shape[0] * np.finfo(float).eps * max(float(w[-1]), 0.0)
    w = np.where(w > cutoff, w, 0.0)
    return (v * np.sqrt(w)) @ v.T


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def eig_range(a: np.ndarray) -> Tuple[float, float]:
    w = np.linalg.eigvalsh(symmetrize(a))
    return float(w[0]), float(w[-1])
