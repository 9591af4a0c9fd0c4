"""
E-step backends.

A backend turns one observation into a ``PosteriorEstimate`` for the current
mixing matrix. ``prepare`` is called once per EM iteration, before any
observation is processed, and may cache quantities shared by all observations
(the LMMSE gain for LISA). After ``prepare`` a backend is read-only, so
``estimate`` may run concurrently on several threads.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Union

import numpy as np

from .closed_form import DiscretePrior, discrete_posterior_moments, gaussian_posterior_estimate
from .errors import InvalidParameterError
from .estep import (
    DEFAULT_GRID_RESOLUTION,
    ESS_WARN_FRACTION,
    PosteriorEstimate,
    brute_force_posterior,
    importance_estimate,
)
from .model import MixingMatrix, NoiseModel
from .posterior import GaussianConditioner, dirichlet_from_moments, lmmse_conditioner, sisa_proposal
from .simplex import DirichletParams

logger = logging.getLogger(__name__)


class BackendKind(str, Enum):
    """E-step backend selector. ``SISA_THEN_LISA`` switches proposals mid-run."""

    SISA = "sisa"
    LISA = "lisa"
    SISA_THEN_LISA = "sisa_then_lisa"
    GAUSSIAN = "gaussian"
    DISCRETE = "discrete"
    ORACLE = "oracle"

    @classmethod
    def parse(cls, value: Union[str, "BackendKind"]) -> "BackendKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            choices = ", ".join(kind.value for kind in cls)
            raise InvalidParameterError(f"unknown E-step backend {value!r} (choose from {choices})") from None


@dataclass(frozen=True)
class ObservationResult:
    """Backend output for one observation."""

    estimate: PosteriorEstimate
    clamped: bool = False


class EstepBackend:
    """Base class for per-observation E-step computations."""

    kind: BackendKind

    def __init__(self, prior: Any, noise: NoiseModel):
        self.prior = prior
        self.noise = noise
        self.h: Optional[MixingMatrix] = None

    @property
    def name(self) -> str:
        return self.kind.value

    def prepare(self, h: MixingMatrix) -> None:
        """Bind the current mixing matrix before a pass over the data."""
        if h.k != self.prior_k():
            raise InvalidParameterError(f"{self.name} backend: prior has k = {self.prior_k()}, H has {h.k} columns")
        self.h = h

    def prior_k(self) -> int:
        return self.prior.k

    def estimate(self, y: np.ndarray, rng: np.random.Generator) -> ObservationResult:
        raise NotImplementedError("Subclasses must implement estimate")

    def _require_prepared(self) -> MixingMatrix:
        if self.h is None:
            raise RuntimeError(f"{self.name} backend used before prepare()")
        return self.h


class SisaBackend(EstepBackend):
    """Importance sampling with the Dirichlet prior as proposal."""

    kind = BackendKind.SISA

    def __init__(self, prior: DirichletParams, noise: NoiseModel, samples: int,
                 ess_warn_fraction: float = ESS_WARN_FRACTION):
        super().__init__(prior, noise)
        self.samples = samples
        self.ess_warn_fraction = ess_warn_fraction
        self.proposal = sisa_proposal(prior)

    def estimate(self, y: np.ndarray, rng: np.random.Generator) -> ObservationResult:
        h = self._require_prepared()
        return ObservationResult(importance_estimate(
            y, self.proposal, h, self.prior, self.noise, self.samples, rng, self.ess_warn_fraction
        ))


class LisaBackend(EstepBackend):
    """Importance sampling with the moment-matched LMMSE Dirichlet proposal."""

    kind = BackendKind.LISA

    def __init__(self, prior: DirichletParams, noise: NoiseModel, samples: int,
                 ess_warn_fraction: float = ESS_WARN_FRACTION):
        super().__init__(prior, noise)
        self.samples = samples
        self.ess_warn_fraction = ess_warn_fraction
        self.conditioner: Optional[GaussianConditioner] = None

    def prepare(self, h: MixingMatrix) -> None:
        super().prepare(h)
        self.conditioner = lmmse_conditioner(h, self.prior, self.noise)

    def estimate(self, y: np.ndarray, rng: np.random.Generator) -> ObservationResult:
        h = self._require_prepared()
        proposal = dirichlet_from_moments(self.conditioner.moments(y))
        estimate = importance_estimate(
            y, proposal, h, self.prior, self.noise, self.samples, rng, self.ess_warn_fraction
        )
        return ObservationResult(estimate, clamped=proposal.clamped)


class GaussianBackend(EstepBackend):
    """Closed-form E-step for a N(0, sigma_z2 I) latent."""

    kind = BackendKind.GAUSSIAN

    def __init__(self, noise: NoiseModel, sigma_z2: float):
        super().__init__(None, noise)
        if not sigma_z2 > 0:
            raise InvalidParameterError(f"sigma_z2 must be positive, got {sigma_z2}")
        self.sigma_z2 = sigma_z2

    def prepare(self, h: MixingMatrix) -> None:
        self.h = h

    def estimate(self, y: np.ndarray, rng: np.random.Generator) -> ObservationResult:
        return ObservationResult(gaussian_posterior_estimate(y, self._require_prepared(), self.sigma_z2, self.noise))


class DiscreteBackend(EstepBackend):
    """Exact Bayes-rule E-step over the atoms of a discrete prior."""

    kind = BackendKind.DISCRETE

    def estimate(self, y: np.ndarray, rng: np.random.Generator) -> ObservationResult:
        return ObservationResult(discrete_posterior_moments(y, self._require_prepared(), self.noise, self.prior))


class OracleBackend(EstepBackend):
    """Grid quadrature E-step for a Dirichlet prior (k <= 3)."""

    kind = BackendKind.ORACLE

    def __init__(self, prior: DirichletParams, noise: NoiseModel,
                 grid_resolution: int = DEFAULT_GRID_RESOLUTION):
        super().__init__(prior, noise)
        if prior.k > 3:
            raise InvalidParameterError(f"oracle backend supports k <= 3, got k = {prior.k}")
        self.grid_resolution = grid_resolution

    def estimate(self, y: np.ndarray, rng: np.random.Generator) -> ObservationResult:
        h = self._require_prepared()
        return ObservationResult(brute_force_posterior(y, h, self.prior, self.noise, self.grid_resolution))


def create_backend(
    kind: Union[str, BackendKind],
    prior: Any,
    noise: NoiseModel,
    samples: int = 500,
    sigma_z2: float = 1.0,
    grid_resolution: int = DEFAULT_GRID_RESOLUTION,
    ess_warn_fraction: float = ESS_WARN_FRACTION,
) -> EstepBackend:
    """
    Create the backend for a single-proposal E-step.

    ``SISA_THEN_LISA`` is a schedule, not a backend; the EM driver resolves it
    to SISA or LISA per iteration before calling this factory.

    Args:
        kind: Backend name or BackendKind
        prior: DirichletParams, or DiscretePrior for the discrete backend
        noise: Noise model
        samples: Importance samples per observation (sisa, lisa)
        sigma_z2: Latent variance of the gaussian backend
        grid_resolution: Quadrature grid resolution of the oracle backend
        ess_warn_fraction: ESS fraction below which a warning is logged

    Returns:
        An unprepared backend; call ``prepare(h)`` before ``estimate``
    """
    kind = BackendKind.parse(kind)
    if kind == BackendKind.GAUSSIAN:
        return GaussianBackend(noise, sigma_z2)
    if kind == BackendKind.DISCRETE:
        if not isinstance(prior, DiscretePrior):
            raise InvalidParameterError(f"discrete backend needs a DiscretePrior, got {type(prior).__name__}")
        return DiscreteBackend(prior, noise)
    if not isinstance(prior, DirichletParams):
        raise InvalidParameterError(f"{kind.value} backend needs a Dirichlet prior, got {type(prior).__name__}")
    if kind == BackendKind.SISA:
        return SisaBackend(prior, noise, samples, ess_warn_fraction)
    if kind == BackendKind.LISA:
        return LisaBackend(prior, noise, samples, ess_warn_fraction)
    if kind == BackendKind.ORACLE:
        return OracleBackend(prior, noise, grid_resolution)
    raise InvalidParameterError(f"{kind.value} is a schedule; resolve it to sisa or lisa first")
