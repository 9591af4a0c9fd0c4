"""
The linear mixing model y_i = H z_i + w_i.

z_i ~ Dir(alpha) on the simplex, w_i ~ N(0, sigma2 I), H a deterministic d x k
matrix. This module holds the model's value types, the synthetic data
generator used by the experiments, the Gaussian conditional likelihood and the
SNR conventions.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .errors import DimensionMismatchError, InvalidParameterError, RankDeficiencyError
from .linalg import RANK_TOL, has_full_column_rank
from .simplex import DirichletParams, check_simplex, dirichlet_moments, dirichlet_sample

logger = logging.getLogger(__name__)

MAX_RANK_ATTEMPTS = 100


@dataclass(frozen=True)
class MixingMatrix:
    """The d x k mixing matrix H; its columns are the endmembers."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=float)
        if entries.ndim != 2:
            raise DimensionMismatchError(f"mixing matrix must be 2-d, got shape {entries.shape}")
        if entries.shape[0] < 1 or entries.shape[1] < 2:
            raise DimensionMismatchError(f"mixing matrix needs d >= 1 and k >= 2, got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise InvalidParameterError("mixing matrix entries must be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)

    @property
    def d(self) -> int:
        return int(self.entries.shape[0])

    @property
    def k(self) -> int:
        return int(self.entries.shape[1])

    def is_full_rank(self, rank_tol: float = RANK_TOL) -> bool:
        return has_full_column_rank(self.entries, rank_tol)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MixingMatrix):
            return NotImplemented
        return bool(np.array_equal(self.entries, other.entries))

    def __hash__(self) -> int:
        return hash(self.entries.tobytes())


MatrixLike = Union[MixingMatrix, np.ndarray]


def as_mixing_matrix(h: MatrixLike) -> MixingMatrix:
    return h if isinstance(h, MixingMatrix) else MixingMatrix(h)


@dataclass(frozen=True)
class NoiseModel:
    """Isotropic Gaussian noise N(0, sigma2 I)."""

    sigma2: float

    def __post_init__(self):
        sigma2 = float(self.sigma2)
        if not math.isfinite(sigma2) or sigma2 <= 0:
            raise InvalidParameterError(f"noise variance must be finite and > 0, got {self.sigma2}")
        object.__setattr__(self, "sigma2", sigma2)


@dataclass(frozen=True)
class Dataset:
    """Observations (N x d) with optional ground truth latents (N x k) and mixing matrix."""

    observations: np.ndarray
    latents: Optional[np.ndarray] = None
    h_true: Optional[MixingMatrix] = None

    def __post_init__(self):
        y = np.array(self.observations, dtype=float)
        if y.ndim != 2 or y.shape[0] < 1:
            raise DimensionMismatchError(f"observations must be a non-empty N x d array, got {y.shape}")
        if not np.all(np.isfinite(y)):
            raise InvalidParameterError("observations must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "observations", y)
        if self.latents is not None:
            z = check_simplex(np.array(self.latents, dtype=float))
            if z.ndim != 2 or z.shape[0] != y.shape[0]:
                raise DimensionMismatchError(f"latents shape {z.shape} does not match {y.shape[0]} observations")
            z.setflags(write=False)
            object.__setattr__(self, "latents", z)
        if self.h_true is not None:
            h = as_mixing_matrix(self.h_true)
            if h.d != y.shape[1]:
                raise DimensionMismatchError(f"h_true has d = {h.d}, observations have d = {y.shape[1]}")
            object.__setattr__(self, "h_true", h)

    @property
    def n(self) -> int:
        return int(self.observations.shape[0])

    @property
    def d(self) -> int:
        return int(self.observations.shape[1])


def _check_model(h: MixingMatrix, prior: DirichletParams) -> None:
    if prior.k != h.k:
        raise DimensionMismatchError(f"prior has k = {prior.k} but H has {h.k} columns")


def generate_data(
    h: MatrixLike,
    prior: DirichletParams,
    noise: NoiseModel,
    n: int,
    rng: np.random.Generator,
) -> Dataset:
    """Draw n observations from the model, keeping latents and H as ground truth."""
    h = as_mixing_matrix(h)
    _check_model(h, prior)
    if n < 1:
        raise InvalidParameterError(f"n must be positive, got {n}")
    z = dirichlet_sample(prior, n, rng)
    w = rng.normal(0.0, math.sqrt(noise.sigma2), size=(n, h.d))
    y = z @ h.entries.T + w
    logger.debug(f"Generated {n} observations with d = {h.d}, k = {h.k}, sigma2 = {noise.sigma2:.3e}")
    return Dataset(observations=y, latents=z, h_true=h)


def log_likelihood_y_given_z(y: np.ndarray, z: np.ndarray, h: MatrixLike, noise: NoiseModel):
    """
    Gaussian log p(y | z) = -||y - Hz||^2 / (2 sigma2) - (d/2) log(2 pi sigma2).

    ``z`` may be a single vector (returns a float) or a stack of rows (returns an array).
    """
    h = as_mixing_matrix(h)
    y = np.asarray(y, dtype=float).reshape(-1)
    z = np.asarray(z, dtype=float)
    if y.size != h.d or z.shape[-1] != h.k:
        raise DimensionMismatchError(f"y has {y.size} entries, z has {z.shape[-1]}, H is {h.entries.shape}")
    residual = y - z @ h.entries.T
    sq = np.einsum("...i,...i->...", residual, residual)
    value = -sq / (2.0 * noise.sigma2) - 0.5 * h.d * math.log(2.0 * math.pi * noise.sigma2)
    return float(value) if np.ndim(value) == 0 else value


def signal_power(h: MatrixLike, prior: DirichletParams) -> float:
    """Tr(H C H') with C the prior covariance."""
    h = as_mixing_matrix(h)
    _check_model(h, prior)
    cov = dirichlet_moments(prior).cov
    return float(np.trace(h.entries @ cov @ h.entries.T))


def snr(h: MatrixLike, prior: DirichletParams, noise: NoiseModel) -> float:
    """Signal-to-noise ratio Tr(H C H') / sigma2."""
    return signal_power(h, prior) / noise.sigma2


def snr_db(h: MatrixLike, prior: DirichletParams, noise: NoiseModel) -> float:
    return 10.0 * math.log10(snr(h, prior, noise))


def sigma2_for_snr_db(h: MatrixLike, prior: DirichletParams, target_db: float) -> float:
    """Noise variance giving the requested SNR in dB for this H."""
    power = signal_power(h, prior)
    if power <= 0:
        raise InvalidParameterError("signal power is zero; SNR target is unreachable")
    return power / 10.0 ** (target_db / 10.0)


def random_mixing_matrix(d: int, k: int, rng: np.random.Generator, rank_tol: float = RANK_TOL) -> MixingMatrix:
    """H with i.i.d. U[0, 1] entries, redrawn until it has full column rank."""
    if k < 2 or d < k:
        raise InvalidParameterError(f"need d >= k >= 2, got d = {d}, k = {k}")
    for attempt in range(MAX_RANK_ATTEMPTS):
        entries = rng.uniform(0.0, 1.0, size=(d, k))
        if has_full_column_rank(entries, rank_tol):
            if attempt:
                logger.warning(f"Mixing matrix needed {attempt + 1} draws to reach full rank")
            return MixingMatrix(entries)
    raise RankDeficiencyError(f"no full-rank {d} x {k} matrix after {MAX_RANK_ATTEMPTS} draws")
