"""
Surrogate posterior distributions for importance sampling.

Three proposals approximate p(z | y) on the simplex:

* ``PriorProposal``      - the Dirichlet prior itself (SISA).
* ``LmmseDirichlet``     - a Dirichlet whose mean and total variance match the
                           LMMSE (Gaussian conditional) moments (LISA).
* ``TruncatedGaussian``  - the LMMSE Gaussian restricted to the simplex, sampled
                           by rejection. Its normalizer is unknown so it is a
                           reference sampler only and cannot weight samples.

LISA's scale uses the norm of the *projected* mean, ``mu = (1 - ||m~||^2) / Tr(C_bar) - 1``.
With that choice the Dirichlet mean equals m~ and its trace-covariance equals
Tr(C_bar) exactly whenever mu is not clamped.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np
import scipy.linalg as la

from .errors import (
    DegenerateCovarianceError,
    DimensionMismatchError,
    InvalidParameterError,
    UnsupportedProposalError,
)
from .linalg import pinv, psd_sqrt, require_full_column_rank, spd_solve, symmetrize
from .model import MatrixLike, NoiseModel, as_mixing_matrix
from .simplex import (
    DEFAULT_FLOOR,
    DirichletParams,
    centering_projection,
    dirichlet_log_sample,
    dirichlet_logpdf,
    dirichlet_logpdf_from_log,
    dirichlet_moments,
    project_to_simplex,
)

logger = logging.getLogger(__name__)

ALPHA_FLOOR = 1e-3
REJECTION_JITTER = 1e-12
AFFINE_TOL = 1e-8


@dataclass(frozen=True)
class LmmseMoments:
    """Gaussian conditional mean m_bar(y) and error covariance C_bar."""

    mean: np.ndarray
    cov: np.ndarray


class GaussianConditioner:
    """
    Conditioning of a Gaussian-moment prior (mean, cov) on y = H z + w.

    The gain and the error covariance do not depend on y; they are computed once
    from a Cholesky factorization of the k x k matrix B'H'H B + sigma2 I, with B
    the symmetric square root of the prior covariance:

        gain = B (B'H'H B + sigma2 I)^-1 (H B)'
        cov  = sigma2 B (B'H'H B + sigma2 I)^-1 B

    These equal cov H' (H cov H' + sigma2 I)^-1 and cov - gain H cov and stay
    accurate as sigma2 -> 0.
    """

    def __init__(self, h: MatrixLike, prior_mean: np.ndarray, prior_cov: np.ndarray, noise: NoiseModel):
        h = as_mixing_matrix(h)
        prior_mean = np.asarray(prior_mean, dtype=float)
        prior_cov = np.asarray(prior_cov, dtype=float)
        if prior_mean.shape != (h.k,) or prior_cov.shape != (h.k, h.k):
            raise DimensionMismatchError(
                f"prior moments {prior_mean.shape}, {prior_cov.shape} do not match H {h.entries.shape}"
            )
        root = psd_sqrt(prior_cov)
        hb = h.entries @ root
        inner = symmetrize(hb.T @ hb) + noise.sigma2 * np.eye(h.k)
        solved = spd_solve(inner, np.hstack([root, hb.T]), what="B'H'H B + sigma2 I")
        self.h = h
        self.prior_mean = prior_mean
        self.gain = root @ solved[:, h.k:]
        self.cov = symmetrize(noise.sigma2 * (root @ solved[:, :h.k]))
        self._offset = prior_mean - self.gain @ (h.entries @ prior_mean)

    def mean(self, y: np.ndarray) -> np.ndarray:
        """Conditional mean for one observation (d,) or a stack of them (N, d)."""
        y = np.asarray(y, dtype=float)
        if y.shape[-1] != self.h.d:
            raise DimensionMismatchError(f"y has {y.shape[-1]} entries, H has {self.h.d} rows")
        return y @ self.gain.T + self._offset

    def moments(self, y: np.ndarray) -> LmmseMoments:
        return LmmseMoments(mean=self.mean(y), cov=self.cov)


def lmmse_conditioner(h: MatrixLike, prior: DirichletParams, noise: NoiseModel) -> GaussianConditioner:
    h = as_mixing_matrix(h)
    if prior.k != h.k:
        raise DimensionMismatchError(f"prior has k = {prior.k} but H has {h.k} columns")
    moments = dirichlet_moments(prior)
    return GaussianConditioner(h, moments.mean, moments.cov, noise)


def lmmse_moments(y: np.ndarray, h: MatrixLike, prior: DirichletParams, noise: NoiseModel) -> LmmseMoments:
    """LMMSE moments of z given y under the Dirichlet prior's first two moments."""
    return lmmse_conditioner(h, prior, noise).moments(np.asarray(y, dtype=float).reshape(-1))


@dataclass(frozen=True)
class SampleBatch:
    """
    Proposal draws, one per row.

    ``log_z`` carries exact log-coordinates when the sampler produced them (Dirichlet
    draws with tiny concentrations underflow in ``z`` but not in ``log_z``).
    """

    z: np.ndarray
    log_z: Optional[np.ndarray] = None

    @property
    def count(self) -> int:
        return int(self.z.shape[0])

    def log_coordinates(self) -> np.ndarray:
        if self.log_z is not None:
            return self.log_z
        with np.errstate(divide="ignore"):
            return np.log(self.z)


def dirichlet_batch(params: DirichletParams, count: int, rng: np.random.Generator) -> SampleBatch:
    log_z = dirichlet_log_sample(params, count, rng)
    z = np.exp(log_z)
    return SampleBatch(z=z / z.sum(axis=1, keepdims=True), log_z=log_z)


class Proposal:
    """Base class of the surrogate posteriors q(z | y)."""

    name = "proposal"

    def sample(self, count: int, rng: np.random.Generator) -> SampleBatch:
        raise NotImplementedError("Subclasses must implement sample")

    def log_density(self, batch: SampleBatch) -> np.ndarray:
        """Normalized log q(z | y) for every row of the batch."""
        raise UnsupportedProposalError(f"{self.name} proposal is unsupported for weighting")


@dataclass(frozen=True)
class PriorProposal(Proposal):
    params: DirichletParams
    name = "prior"

    def sample(self, count: int, rng: np.random.Generator) -> SampleBatch:
        return dirichlet_batch(self.params, count, rng)

    def log_density(self, batch: SampleBatch) -> np.ndarray:
        return dirichlet_logpdf_from_log(self.params, batch.log_coordinates())


@dataclass(frozen=True)
class LmmseDirichlet(Proposal):
    alpha_bar: DirichletParams
    lmmse: LmmseMoments
    mu: float
    m_tilde: np.ndarray
    clamped: bool = False
    name = "lmmse-dirichlet"

    def sample(self, count: int, rng: np.random.Generator) -> SampleBatch:
        return dirichlet_batch(self.alpha_bar, count, rng)

    def log_density(self, batch: SampleBatch) -> np.ndarray:
        return dirichlet_logpdf_from_log(self.alpha_bar, batch.log_coordinates())


@dataclass(frozen=True)
class TruncatedGaussian(Proposal):
    lmmse: LmmseMoments
    max_attempts: int = 1_000_000
    name = "truncated-gaussian"

    def sample(self, count: int, rng: np.random.Generator) -> SampleBatch:
        z, _ = truncated_gaussian_rejection(self.lmmse, count, self.max_attempts, rng)
        return SampleBatch(z=z)


def sisa_proposal(prior: DirichletParams) -> PriorProposal:
    """The prior as proposal."""
    return PriorProposal(prior)


def dirichlet_from_moments(
    lmmse: LmmseMoments,
    floor: float = DEFAULT_FLOOR,
    alpha_floor: float = ALPHA_FLOOR,
) -> LmmseDirichlet:
    """Moment-matched Dirichlet for given LMMSE moments."""
    trace = float(np.trace(lmmse.cov))
    if not trace > 0:
        raise DegenerateCovarianceError(f"LMMSE covariance has non-positive trace {trace:.3e}")
    m_tilde = project_to_simplex(lmmse.mean, floor)
    k = m_tilde.size
    mu = (1.0 - float(m_tilde @ m_tilde)) / trace - 1.0
    mu_min = k * alpha_floor / float(m_tilde.min())
    clamped = mu < mu_min
    if clamped:
        mu = mu_min
    alpha_bar = np.maximum(mu * m_tilde, alpha_floor)
    return LmmseDirichlet(
        alpha_bar=DirichletParams(alpha_bar),
        lmmse=lmmse,
        mu=float(mu),
        m_tilde=m_tilde,
        clamped=bool(clamped),
    )


def lisa_proposal(
    y: np.ndarray,
    h: MatrixLike,
    prior: DirichletParams,
    noise: NoiseModel,
    floor: float = DEFAULT_FLOOR,
    alpha_floor: float = ALPHA_FLOOR,
) -> LmmseDirichlet:
    """Dirichlet proposal matching the projected LMMSE mean and the LMMSE total variance."""
    return dirichlet_from_moments(lmmse_moments(y, h, prior, noise), floor, alpha_floor)


@dataclass(frozen=True)
class HighSnrLimits:
    """sigma2 -> 0 limits of the LMMSE moments for a full-rank H."""

    gain: np.ndarray
    offset: np.ndarray
    cov_limit: np.ndarray

    def mean(self, y: np.ndarray) -> np.ndarray:
        """(HP)^+ y + v_H."""
        return np.asarray(y, dtype=float) @ self.gain.T + self.offset

    def cov(self, sigma2: float) -> np.ndarray:
        return sigma2 * self.cov_limit


def high_snr_limits(h: MatrixLike, k: int) -> HighSnrLimits:
    h = as_mixing_matrix(h)
    if h.k != k:
        raise DimensionMismatchError(f"H has {h.k} columns, expected {k}")
    require_full_column_rank(h.entries, "H")
    p = centering_projection(k)
    hp = h.entries @ p
    hp_pinv = pinv(hp)
    offset = (np.eye(k) - hp_pinv @ h.entries) @ np.ones(k) / k
    cov_limit = symmetrize(pinv(p @ h.entries.T @ h.entries @ p))
    return HighSnrLimits(gain=hp_pinv, offset=offset, cov_limit=cov_limit)


def high_snr_proposal(
    y: np.ndarray,
    h: MatrixLike,
    noise: NoiseModel,
    c: float = 1.0,
    floor: float = DEFAULT_FLOOR,
    alpha_floor: float = ALPHA_FLOOR,
) -> LmmseDirichlet:
    """
    Limiting LISA proposal Dir((c / sigma2) * m~) with m~ the projected high-SNR mean.

    ``c`` is a free positive constant; the proposal characterizes the limit and is
    not a moment match.
    """
    if c <= 0:
        raise InvalidParameterError(f"c must be positive, got {c}")
    h = as_mixing_matrix(h)
    limits = high_snr_limits(h, h.k)
    mean = limits.mean(np.asarray(y, dtype=float).reshape(-1))
    m_tilde = project_to_simplex(mean, floor)
    mu = c / noise.sigma2
    return LmmseDirichlet(
        alpha_bar=DirichletParams(np.maximum(mu * m_tilde, alpha_floor)),
        lmmse=LmmseMoments(mean=mean, cov=limits.cov(noise.sigma2)),
        mu=mu,
        m_tilde=m_tilde,
    )


def moore_penrose_residuals(h: MatrixLike, prior: DirichletParams) -> Dict[str, float]:
    """
    Residuals of the four Moore-Penrose conditions for M = B (HB)^+ and M' = H B B^+.

    B is the symmetric square root of the prior covariance. Also reports how far
    M is from (HP)^+ and (HP)^+ H P from P.
    """
    h = as_mixing_matrix(h)
    cov = dirichlet_moments(prior).cov
    b = psd_sqrt(cov)
    m = b @ pinv(h.entries @ b)
    m_prime = h.entries @ b @ pinv(b)
    p = centering_projection(h.k)
    hp_pinv = pinv(h.entries @ p)
    mm = m @ m_prime
    mpm = m_prime @ m
    return {
        "mpm_eq_m": float(np.linalg.norm(m @ m_prime @ m - m)),
        "pmp_eq_p": float(np.linalg.norm(m_prime @ m @ m_prime - m_prime)),
        "mp_symmetric": float(np.linalg.norm(mm - mm.T)),
        "pm_symmetric": float(np.linalg.norm(mpm - mpm.T)),
        "m_vs_hp_pinv": float(np.linalg.norm(m - hp_pinv)),
        "hp_pinv_hp_vs_p": float(np.linalg.norm(hp_pinv @ h.entries @ p - p)),
    }


def _affine_basis(k: int) -> np.ndarray:
    return la.null_space(np.ones((1, k)))


def truncated_gaussian_rejection(
    moments: LmmseMoments,
    count: int,
    max_attempts: int,
    rng: np.random.Generator,
    jitter: float = REJECTION_JITTER,
) -> Tuple[np.ndarray, float]:
    """
    Rejection sampler for N(m_bar, C_bar) restricted to the simplex.

    Candidates are drawn on the affine hull {1'z = 1} using (k-1)-dim centered
    coordinates, then kept iff every entry is nonnegative. Returns the accepted
    samples (possibly fewer than ``count``) and the acceptance rate.
    """
    mean = np.asarray(moments.mean, dtype=float)
    k = mean.size
    if count < 0 or max_attempts < 0:
        raise InvalidParameterError("count and max_attempts must be nonnegative")
    basis = _affine_basis(k)
    reduced = basis.T @ (symmetrize(moments.cov) + jitter * np.eye(k)) @ basis
    root = psd_sqrt(reduced)
    center = mean + (1.0 - mean.sum()) / k

    accepted = []
    n_accepted = 0
    attempted = 0
    while n_accepted < count and attempted < max_attempts:
        batch = min(max_attempts - attempted, max(4 * (count - n_accepted), 256))
        xi = rng.standard_normal((batch, k - 1)) @ root
        z = center + xi @ basis.T
        keep = np.all(z >= 0, axis=1) & (np.abs(z.sum(axis=1) - 1.0) < AFFINE_TOL)
        attempted += batch
        if np.any(keep):
            accepted.append(z[keep])
            n_accepted += int(keep.sum())

    samples = np.concatenate(accepted)[:count] if accepted else np.empty((0, k))
    rate = n_accepted / attempted if attempted else 0.0
    if samples.shape[0] < count:
        logger.warning(
            f"Rejection sampler accepted {samples.shape[0]} of {count} requested samples "
            f"(acceptance rate {rate:.2e} over {attempted} draws)"
        )
    return samples, float(rate)


def proposal_log_density(p: Proposal, z: np.ndarray) -> float:
    """Normalized log q(z | y) for the Dirichlet-based proposals."""
    if isinstance(p, PriorProposal):
        return dirichlet_logpdf(p.params, z)
    if isinstance(p, LmmseDirichlet):
        return dirichlet_logpdf(p.alpha_bar, z)
    raise UnsupportedProposalError(f"{p.name} proposal is unsupported for weighting")
