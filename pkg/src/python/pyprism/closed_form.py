"""
Exact conditional moments for two latent priors with closed-form posteriors.

* Gaussian latent z ~ N(0, sigma_z2 I): y and z are jointly Gaussian, the
  posterior is Gaussian (the PPCA E-step).
* Discrete latent, uniform over J known atoms: Bayes rule over the atoms (the
  GMM-style E-step).

The Gaussian formulas give cov[z | y]; EM needs E[zz' | y] = cov + mean mean'.
``gaussian_posterior_estimate`` performs that conversion explicitly.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.stats import multivariate_normal

from .errors import DimensionMismatchError, InvalidParameterError
from .estep import PosteriorEstimate, normalize_log_weights, weighted_estimate
from .model import MatrixLike, NoiseModel, as_mixing_matrix, log_likelihood_y_given_z
from .posterior import GaussianConditioner, Proposal, SampleBatch

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DiscretePrior:
    """Uniform distribution over the rows of ``atoms`` (J x k)."""

    atoms: np.ndarray

    def __post_init__(self):
        atoms = np.array(self.atoms, dtype=float)
        if atoms.ndim != 2 or atoms.shape[0] < 1:
            raise InvalidParameterError(f"atoms must be a non-empty J x k array, got {atoms.shape}")
        if not np.all(np.isfinite(atoms)):
            raise InvalidParameterError("atoms must be finite")
        atoms.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)

    @property
    def size(self) -> int:
        return int(self.atoms.shape[0])

    @property
    def k(self) -> int:
        return int(self.atoms.shape[1])

    def log_density(self, batch: SampleBatch) -> np.ndarray:
        """Probability mass 1/J of every atom."""
        return np.full(batch.count, -math.log(self.size))


class AtomEnumeration(Proposal):
    """Proposal that returns every atom of a discrete prior exactly once, in order."""

    name = "atom-enumeration"

    def __init__(self, prior: DiscretePrior):
        self.prior = prior

    def sample(self, count: int, rng: np.random.Generator) -> SampleBatch:
        if count != self.prior.size:
            raise InvalidParameterError(f"enumeration yields exactly {self.prior.size} samples, asked for {count}")
        return SampleBatch(z=self.prior.atoms)

    def log_density(self, batch: SampleBatch) -> np.ndarray:
        return self.prior.log_density(batch)


def gaussian_conditioner(h: MatrixLike, sigma_z2: float, noise: NoiseModel) -> GaussianConditioner:
    if not sigma_z2 > 0:
        raise InvalidParameterError(f"sigma_z2 must be positive, got {sigma_z2}")
    h = as_mixing_matrix(h)
    return GaussianConditioner(h, np.zeros(h.k), sigma_z2 * np.eye(h.k), noise)


def gaussian_posterior_moments(
    y: np.ndarray, h: MatrixLike, sigma_z2: float, noise: NoiseModel
) -> Tuple[np.ndarray, np.ndarray]:
    """E[z | y] and cov[z | y] for z ~ N(0, sigma_z2 I)."""
    conditioner = gaussian_conditioner(h, sigma_z2, noise)
    return conditioner.mean(np.asarray(y, dtype=float).reshape(-1)), conditioner.cov


def second_moment_from_cov(mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """E[zz'] = cov + mean mean'."""
    return cov + np.outer(mean, mean)


def gaussian_posterior_estimate(
    y: np.ndarray, h: MatrixLike, sigma_z2: float, noise: NoiseModel
) -> PosteriorEstimate:
    """Exact Gaussian posterior as a PosteriorEstimate (``ess`` is infinite, no sampling)."""
    h = as_mixing_matrix(h)
    y = np.asarray(y, dtype=float).reshape(-1)
    mean, cov = gaussian_posterior_moments(y, h, sigma_z2, noise)
    marginal_cov = sigma_z2 * h.entries @ h.entries.T + noise.sigma2 * np.eye(h.d)
    return PosteriorEstimate(
        z_mean=mean,
        zz_mean=second_moment_from_cov(mean, cov),
        ess=math.inf,
        sample_count=0,
        log_evidence=float(multivariate_normal.logpdf(y, mean=np.zeros(h.d), cov=marginal_cov)),
    )


def discrete_posterior_moments(
    y: np.ndarray, h: MatrixLike, noise: NoiseModel, prior: DiscretePrior
) -> PosteriorEstimate:
    """
    Exact posterior moments over the atoms by Bayes rule (log-sum-exp).

    ``ess`` is exp(entropy) of the posterior atom weights.
    """
    h = as_mixing_matrix(h)
    if prior.k != h.k:
        raise DimensionMismatchError(f"atoms have k = {prior.k} but H has {h.k} columns")
    log_lik = np.atleast_1d(log_likelihood_y_given_z(y, prior.atoms, h, noise))
    estimate = weighted_estimate(prior.atoms, log_lik)
    w = normalize_log_weights(log_lik)
    positive = w[w > 0]
    entropy = float(-np.sum(positive * np.log(positive)))
    return PosteriorEstimate(
        z_mean=estimate.z_mean,
        zz_mean=estimate.zz_mean,
        ess=math.exp(entropy),
        sample_count=prior.size,
        log_evidence=estimate.log_evidence,
    )
