"""
Conditional moments E[z | y] and E[zz' | y] by normalized importance sampling.

Only the unnormalized posterior p(y | z) p(z) is needed: log-weights
``log p(y|z) + log p(z) - log q(z|y)`` are normalized with a max-shifted
softmax, which is invariant to any constant offset.

``brute_force_posterior`` integrates the same quantities on a barycentric grid
(k <= 3) and serves as an independent oracle.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np
from scipy.special import logsumexp, xlogy

from .errors import DegenerateWeightsError, DimensionMismatchError, InvalidParameterError
from .model import Dataset, MatrixLike, NoiseModel, as_mixing_matrix, log_likelihood_y_given_z
from .posterior import Proposal, SampleBatch
from .simplex import DirichletParams, dirichlet_logpdf_from_log, simplex_quadrature

logger = logging.getLogger(__name__)

FLUSH_SPAN = 700.0
ESS_WARN_FRACTION = 0.01
DEFAULT_GRID_RESOLUTION = 200


@dataclass(frozen=True)
class PosteriorEstimate:
    """
    Per-observation conditional moments.

    ``ess`` is the effective sample size of the weights that produced the moments;
    ``log_evidence`` estimates log p(y).
    """

    z_mean: np.ndarray
    zz_mean: np.ndarray
    ess: float
    sample_count: int
    log_evidence: float = math.nan


def effective_sample_size(weights: np.ndarray) -> float:
    """1 / sum(w^2) for normalized weights."""
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.dot(w, w))


def normalize_log_weights(log_w: np.ndarray) -> np.ndarray:
    """
    Max-shifted softmax of log-weights.

    Log-weights more than ``FLUSH_SPAN`` below the maximum are flushed to zero
    weight. Raises ``DegenerateWeightsError`` when no weight is finite.
    """
    log_w = np.asarray(log_w, dtype=float)
    top = np.max(log_w) if log_w.size else -np.inf
    if not np.isfinite(top):
        finite = log_w[np.isfinite(log_w)]
        raise DegenerateWeightsError(
            "degenerate weights: no finite log-weight",
            {
                "count": int(log_w.size),
                "n_finite": int(finite.size),
                "max_log_weight": float(top) if log_w.size else None,
                "n_nan": int(np.isnan(log_w).sum()),
            },
        )
    shifted = log_w - top
    with np.errstate(under="ignore"):
        w = np.where(shifted < -FLUSH_SPAN, 0.0, np.exp(shifted))
    return w / w.sum()


def weighted_estimate(z: np.ndarray, log_w: np.ndarray) -> PosteriorEstimate:
    """Moments of the samples ``z`` under softmax-normalized ``log_w``."""
    z = np.asarray(z, dtype=float)
    w = normalize_log_weights(log_w)
    z_mean = w @ z
    zz_mean = (z * w[:, None]).T @ z
    zz_mean = 0.5 * (zz_mean + zz_mean.T)
    log_evidence = float(logsumexp(log_w) - math.log(len(log_w)))
    return PosteriorEstimate(
        z_mean=z_mean,
        zz_mean=zz_mean,
        ess=effective_sample_size(w),
        sample_count=int(len(log_w)),
        log_evidence=log_evidence,
    )


def prior_log_density(prior, batch: SampleBatch) -> np.ndarray:
    """log p(z) for every row of the batch; priors other than Dirichlet provide ``log_density``."""
    if isinstance(prior, DirichletParams):
        return dirichlet_logpdf_from_log(prior, batch.log_coordinates())
    return prior.log_density(batch)


def importance_estimate(
    y: np.ndarray,
    proposal: Proposal,
    h: MatrixLike,
    prior: Union[DirichletParams, object],
    noise: NoiseModel,
    m: int,
    rng: np.random.Generator,
    ess_warn_fraction: float = ESS_WARN_FRACTION,
) -> PosteriorEstimate:
    """Normalized importance-sampling estimate of E[z | y] and E[zz' | y] from ``m`` proposal draws."""
    if m < 1:
        raise InvalidParameterError(f"sample count must be positive, got {m}")
    h = as_mixing_matrix(h)
    batch = proposal.sample(m, rng)
    if batch.z.shape[1] != h.k:
        raise DimensionMismatchError(f"proposal draws have k = {batch.z.shape[1]}, H has {h.k} columns")
    log_w = (
        log_likelihood_y_given_z(y, batch.z, h, noise)
        + prior_log_density(prior, batch)
        - proposal.log_density(batch)
    )
    estimate = weighted_estimate(batch.z, np.atleast_1d(log_w))
    if estimate.ess < ess_warn_fraction * batch.count:
        logger.warning(
            f"Low effective sample size {estimate.ess:.1f} of {batch.count} with {proposal.name} proposal"
        )
    return estimate


def _grid_log_prior(prior: DirichletParams, nodes: np.ndarray) -> np.ndarray:
    return xlogy(prior.alpha - 1.0, nodes).sum(axis=1) - prior.log_normalizer()


def quadrature_grid(prior: DirichletParams, grid_resolution: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and log of (quadrature weight x prior density).

    Boundary-singular priors (some alpha_n < 1) use the interior centroid rule,
    all others the trapezoid rule on the barycentric grid.
    """
    if prior.k > 3:
        raise InvalidParameterError(f"grid quadrature supports k <= 3, got k = {prior.k}")
    rule = "centroid" if np.any(prior.alpha < 1) else "trapezoid"
    nodes, weights = simplex_quadrature(prior.k, grid_resolution, rule)
    with np.errstate(divide="ignore"):
        log_mass = np.log(weights) + _grid_log_prior(prior, nodes)
    return nodes, log_mass


def brute_force_posterior(
    y: np.ndarray,
    h: MatrixLike,
    prior: DirichletParams,
    noise: NoiseModel,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
) -> PosteriorEstimate:
    """Quadrature oracle for the posterior moments (k <= 3). ``ess`` is the grid size."""
    h = as_mixing_matrix(h)
    if prior.k != h.k:
        raise DimensionMismatchError(f"prior has k = {prior.k} but H has {h.k} columns")
    nodes, log_mass = quadrature_grid(prior, grid_resolution)
    log_w = log_likelihood_y_given_z(y, nodes, h, noise) + log_mass
    estimate = weighted_estimate(nodes, log_w)
    return PosteriorEstimate(
        z_mean=estimate.z_mean,
        zz_mean=estimate.zz_mean,
        ess=float(len(nodes)),
        sample_count=int(len(nodes)),
        log_evidence=float(logsumexp(log_w)),
    )


def marginal_log_likelihood(
    data: Dataset,
    h: MatrixLike,
    prior: DirichletParams,
    noise: NoiseModel,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
) -> float:
    """sum_i log p(y_i) by quadrature (k <= 3)."""
    h = as_mixing_matrix(h)
    nodes, log_mass = quadrature_grid(prior, grid_resolution)
    total = 0.0
    for y in data.observations:
        total += float(logsumexp(log_likelihood_y_given_z(y, nodes, h, noise) + log_mass))
    return total
