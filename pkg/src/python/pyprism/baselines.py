"""
VCA baseline and the permutation-aligned MSE metric.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from .errors import DimensionMismatchError, InvalidParameterError, RankDeficiencyError
from .linalg import RANK_TOL, pinv
from .model import Dataset, MatrixLike, MixingMatrix, as_mixing_matrix

logger = logging.getLogger(__name__)

EXHAUSTIVE_MAX_K = 8
METRIC_COLUMNS = ["method", "seed", "snr_db", "n_samples", "m_samples", "mse"]


@dataclass
class MetricRecord:
    """
    Permutation-aligned error of an estimate.

    ``permutation[i]`` is the estimated column matched to true column i.
    ``config`` is a snapshot of the run settings (seed, snr_db, n_samples,
    m_samples, ...).
    """

    mse: float
    permutation: Tuple[int, ...]
    method: str = ""
    config: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.permutation)
        if sorted(self.permutation) != list(range(k)):
            raise InvalidParameterError(f"permutation {self.permutation} is not a bijection on 0..{k - 1}")
        if not (self.mse >= 0 or math.isnan(self.mse)):
            raise InvalidParameterError(f"mse must be nonnegative, got {self.mse}")

    def to_row(self) -> Dict[str, Any]:
        """CSV row: method, seed, snr_db, n_samples, m_samples, mse."""
        return {
            "method": self.method,
            "seed": self.config.get("seed"),
            "snr_db": self.config.get("snr_db"),
            "n_samples": self.config.get("n_samples"),
            "m_samples": self.config.get("m_samples"),
            "mse": self.mse,
        }


def column_cost(h_true: MatrixLike, h_est: MatrixLike) -> np.ndarray:
    """c_ij = ||H_i - Hhat_j||^2 over columns."""
    a = as_mixing_matrix(h_true).entries
    b = as_mixing_matrix(h_est).entries
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mixing matrices differ in shape: {a.shape} vs {b.shape}")
    diff = a[:, :, None] - b[:, None, :]
    return np.einsum("dij,dij->ij", diff, diff)


def permutation_mse(h_true: MatrixLike, h_est: MatrixLike, method: str = "", **config: Any) -> MetricRecord:
    """Minimum summed squared column error over column permutations (Hungarian method)."""
    cost = column_cost(h_true, h_est)
    rows, cols = linear_sum_assignment(cost)
    permutation = np.empty(cost.shape[0], dtype=int)
    permutation[rows] = cols
    return MetricRecord(
        mse=float(cost[rows, cols].sum()),
        permutation=tuple(int(p) for p in permutation),
        method=method,
        config=dict(config),
    )


def exhaustive_permutation_mse(h_true: MatrixLike, h_est: MatrixLike) -> MetricRecord:
    """Brute force over all k! permutations (k <= 8)."""
    cost = column_cost(h_true, h_est)
    k = cost.shape[0]
    if k > EXHAUSTIVE_MAX_K:
        raise InvalidParameterError(f"exhaustive search supports k <= {EXHAUSTIVE_MAX_K}, got {k}")
    index = np.arange(k)
    best, best_perm = math.inf, None
    for perm in itertools.permutations(range(k)):
        total = float(cost[index, list(perm)].sum())
        if total < best:
            best, best_perm = total, perm
    return MetricRecord(mse=best, permutation=tuple(best_perm), method="exhaustive")


def vca_indices(data: Dataset, k: int, rng: np.random.Generator) -> List[int]:
    """
    Indices of the observations chosen as vertices.

    The observations are projected onto their k-dim principal subspace (SVD of
    the d x N data matrix). Each step draws a random direction, removes its
    component in the span of the vertices chosen so far and picks the
    observation with the largest absolute projection onto it.
    """
    y = data.observations.T
    d, n = y.shape
    if k < 2:
        raise InvalidParameterError(f"k must be >= 2, got {k}")
    if n < k or d < k:
        raise InvalidParameterError(f"VCA needs N >= k and d >= k, got N = {n}, d = {d}, k = {k}")

    u, s, _ = np.linalg.svd(y, full_matrices=False)
    if s[k - 1] <= RANK_TOL * s[0]:
        raise RankDeficiencyError(f"data rank is below k = {k} (singular value {s[k - 1]:.3e})")
    x = u[:, :k].T @ y

    selected = np.zeros((k, 0))
    indices: List[int] = []
    for _ in range(k):
        w = rng.standard_normal(k)
        f = w - selected @ (pinv(selected) @ w) if indices else w
        f /= np.linalg.norm(f)
        scores = np.abs(f @ x)
        scores[indices] = -np.inf
        best = int(np.argmax(scores))
        indices.append(best)
        selected = x[:, indices]
    logger.debug(f"VCA selected observations {indices}")
    return indices


def vca(data: Dataset, k: int, rng: np.random.Generator) -> MixingMatrix:
    """Vertex component analysis; columns of the result are observations."""
    indices = vca_indices(data, k, rng)
    return MixingMatrix(data.observations[indices].T)


def metric_frame(records: List[MetricRecord]) -> pd.DataFrame:
    """MetricRecords as a DataFrame with the CSV column schema."""
    return pd.DataFrame([record.to_row() for record in records], columns=METRIC_COLUMNS)

