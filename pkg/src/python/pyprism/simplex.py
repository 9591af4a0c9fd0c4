"""
Simplex geometry and Dirichlet distribution primitives.

Points of the simplex are plain numpy vectors (or stacks of them, one per row).
Concentration vectors are wrapped in ``DirichletParams`` so they are validated
once at construction.

Note on the centering identity: for P = I - 11^T/k and any simplex vector m the
definitions force ``P m = m - (1/k) 1``. Some write-ups print the identity as
``m = P m - (1/k) 1``; that sign is inconsistent with P and is not used here.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.special import gammaln, xlogy

from .errors import DimensionMismatchError, InvalidParameterError, SingularDensityError

logger = logging.getLogger(__name__)

SIMPLEX_TOL = 1e-9
DEFAULT_FLOOR = 1e-6


@dataclass(frozen=True)
class DirichletParams:
    """Concentration vector of a Dirichlet distribution."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.array(self.alpha, dtype=float).reshape(-1)
        if alpha.size < 2:
            raise InvalidParameterError(f"Dirichlet needs k >= 2 components, got {alpha.size}")
        if not np.all(np.isfinite(alpha)) or np.any(alpha <= 0):
            raise InvalidParameterError(f"Dirichlet concentrations must be finite and > 0, got {alpha}")
        alpha.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)

    @property
    def k(self) -> int:
        return int(self.alpha.size)

    @property
    def total(self) -> float:
        return float(self.alpha.sum())

    @classmethod
    def symmetric(cls, k: int, value: float = 1.0) -> "DirichletParams":
        return cls(np.full(k, float(value)))

    def log_normalizer(self) -> float:
        """log of the multivariate Beta function B(alpha)."""
        return float(gammaln(self.alpha).sum() - gammaln(self.total))

    def __eq__(self, other) -> bool:
        if not isinstance(other, DirichletParams):
            return NotImplemented
        return bool(np.array_equal(self.alpha, other.alpha))

    def __hash__(self) -> int:
        return hash(self.alpha.tobytes())


@dataclass(frozen=True)
class DirichletMoments:
    mean: np.ndarray
    cov: np.ndarray


def check_simplex(z: np.ndarray, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Validate that every row of ``z`` lies on the simplex and return it as a float array."""
    z = np.asarray(z, dtype=float)
    if z.ndim == 0 or z.shape[-1] < 2:
        raise DimensionMismatchError(f"simplex vectors need at least 2 entries, got shape {z.shape}")
    if np.any(~np.isfinite(z)) or np.any(z < 0):
        raise InvalidParameterError("simplex vectors must be finite and nonnegative")
    if np.any(np.abs(z.sum(axis=-1) - 1.0) > tol):
        raise InvalidParameterError(f"simplex vectors must sum to 1 within {tol}")
    return z


def dirichlet_log_sample(params: DirichletParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """
    Draw ``count`` Dirichlet samples and return them in log space, shape (count, k).

    Uses normalized Gamma(alpha_n, 1) variates. Each Gamma(a) variate is drawn as
    Gamma(a + 1) * U^(1/a), which keeps small concentrations from underflowing;
    the log values are always finite.
    """
    if count < 1:
        raise InvalidParameterError(f"sample count must be positive, got {count}")
    alpha = params.alpha
    g = rng.gamma(alpha + 1.0, 1.0, size=(count, alpha.size))
    u = 1.0 - rng.random(size=(count, alpha.size))
    log_g = np.log(g) + np.log(u) / alpha
    log_total = np.logaddexp.reduce(log_g, axis=1, keepdims=True)
    return log_g - log_total


def dirichlet_sample(params: DirichletParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``count`` i.i.d. Dir(alpha) vectors, one per row."""
    z = np.exp(dirichlet_log_sample(params, count, rng))
    return z / z.sum(axis=1, keepdims=True)


def dirichlet_logpdf_from_log(params: DirichletParams, log_z: np.ndarray) -> np.ndarray:
    """Normalized log-density evaluated from log-coordinates (no boundary issues)."""
    log_z = np.asarray(log_z, dtype=float)
    if log_z.shape[-1] != params.k:
        raise DimensionMismatchError(f"expected {params.k} components, got {log_z.shape[-1]}")
    exponent = params.alpha - 1.0
    with np.errstate(invalid="ignore"):
        terms = np.where(exponent == 0.0, 0.0, exponent * log_z)
    return terms.sum(axis=-1) - params.log_normalizer()


def dirichlet_logpdf(params: DirichletParams, z: np.ndarray) -> float:
    """
    Fully normalized Dirichlet log-density at a simplex point.

    Raises ``SingularDensityError`` when ``z`` has a zero entry where the
    concentration is below one. A zero entry with concentration above one is a
    zero-density point and yields ``-inf``.
    """
    z = check_simplex(z)
    if z.ndim != 1:
        raise DimensionMismatchError("dirichlet_logpdf takes a single simplex vector")
    if z.size != params.k:
        raise DimensionMismatchError(f"expected {params.k} components, got {z.size}")
    if np.any((z == 0) & (params.alpha < 1)):
        raise SingularDensityError()
    return float(xlogy(params.alpha - 1.0, z).sum() - params.log_normalizer())


def dirichlet_moments(params: DirichletParams) -> DirichletMoments:
    """Mean alpha/1'alpha and covariance (diag(m) - mm')/(1'alpha + 1)."""
    mean = params.alpha / params.total
    cov = (np.diag(mean) - np.outer(mean, mean)) / (params.total + 1.0)
    return DirichletMoments(mean=mean, cov=cov)


def centering_projection(k: int) -> np.ndarray:
    """Orthogonal projector I - 11'/k onto the zero-sum subspace."""
    if k < 2:
        raise InvalidParameterError(f"k must be >= 2, got {k}")
    return np.eye(k) - np.full((k, k), 1.0 / k)


def euclidean_projection(v: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto the simplex (sort and threshold)."""
    v = np.asarray(v, dtype=float).reshape(-1)
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    ind = np.arange(1, v.size + 1)
    rho = np.nonzero(u - cssv / ind > 0)[0][-1]
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def project_to_simplex(v: np.ndarray, floor: float = DEFAULT_FLOOR) -> np.ndarray:
    """
    Euclidean projection onto the simplex followed by a positivity floor.

    Every entry of the result is at least ``floor / (1 + k * floor)`` so the output
    is usable as a Dirichlet mean.
    """
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size < 2:
        raise InvalidParameterError(f"k must be >= 2, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise InvalidParameterError("cannot project a non-finite vector")
    if floor < 0 or floor * v.size >= 1:
        raise InvalidParameterError(f"floor must lie in [0, 1/k), got {floor}")
    z = np.maximum(euclidean_projection(v), floor)
    return z / z.sum()


def simplex_quadrature(k: int, resolution: int, rule: str = "trapezoid") -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights for integrating over the simplex (k = 2 or 3).

    The measure is Lebesgue measure on the first k-1 coordinates, the one Dirichlet
    densities are normalized against. ``rule="trapezoid"`` uses the barycentric grid
    of spacing 1/resolution (boundary included); ``rule="centroid"`` evaluates at the
    centroids of the grid cells, all strictly interior.
    """
    n = int(resolution)
    if n < 1:
        raise InvalidParameterError(f"resolution must be positive, got {resolution}")
    if rule not in ("trapezoid", "centroid"):
        raise InvalidParameterError(f"unknown quadrature rule {rule!r}")

    if k == 2:
        if rule == "trapezoid":
            x = np.arange(n + 1) / n
            w = np.full(n + 1, 1.0 / n)
            w[[0, -1]] *= 0.5
        else:
            x = (np.arange(n) + 0.5) / n
            w = np.full(n, 1.0 / n)
        return np.column_stack([x, 1.0 - x]), w

    if k == 3:
        ii, jj = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = ii + jj <= n
        ii, jj = ii[keep], jj[keep]
        index = -np.ones((n + 1, n + 1), dtype=int)
        index[ii, jj] = np.arange(ii.size)
        nodes = np.column_stack([ii / n, jj / n, (n - ii - jj) / n])

        up_i, up_j = ii[ii + jj <= n - 1], jj[ii + jj <= n - 1]
        down_i, down_j = ii[ii + jj <= n - 2], jj[ii + jj <= n - 2]
        triangles = np.concatenate([
            np.column_stack([index[up_i, up_j], index[up_i + 1, up_j], index[up_i, up_j + 1]]),
            np.column_stack([index[down_i + 1, down_j], index[down_i, down_j + 1],
                             index[down_i + 1, down_j + 1]]),
        ])
        area = 0.5 / n ** 2
        if rule == "centroid":
            return nodes[triangles].mean(axis=1), np.full(len(triangles), area)
        weights = np.zeros(ii.size)
        np.add.at(weights, triangles.ravel(), area / 3.0)
        return nodes, weights

    raise InvalidParameterError(f"simplex quadrature supports k <= 3, got k = {k}")
