"""
Monte Carlo EM for the mixing matrix.

Each iteration accumulates the sufficient statistics

    stat_A = sum_i y_i E[z_i | y_i]'        (d x k)
    stat_B = sum_i E[z_i z_i' | y_i]        (k x k)

from an E-step backend and updates H = stat_A stat_B^-1 (the closed-form
maximizer of the surrogate). Per-observation work can run on a thread pool;
every observation draws from its own substream keyed by (master seed,
iteration, observation index) and the sums are formed in observation order, so
results do not depend on the number of workers.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from .backends import BackendKind, EstepBackend, ObservationResult, create_backend
from .errors import DegenerateWeightsError, DimensionMismatchError, EmStepError, InvalidParameterError, PrismError
from .estep import DEFAULT_GRID_RESOLUTION, ESS_WARN_FRACTION
from .linalg import spd_solve, symmetrize
from .model import Dataset, MatrixLike, MixingMatrix, NoiseModel, as_mixing_matrix

logger = logging.getLogger(__name__)

SeedLike = Union[int, np.random.Generator, None]


@dataclass
class EmConfig:
    """EM schedule and E-step settings."""

    total_iterations: int = 100
    switch_iteration: int = 50
    samples_per_obs: int = 500
    estep_backend: Union[BackendKind, str] = BackendKind.SISA_THEN_LISA
    ridge: float = 1e-10
    early_stop_tol: Optional[float] = None
    jobs: Optional[int] = None
    sigma_z2: float = 1.0
    grid_resolution: int = DEFAULT_GRID_RESOLUTION
    ess_warn_fraction: float = ESS_WARN_FRACTION

    def __post_init__(self):
        self.estep_backend = BackendKind.parse(self.estep_backend)
        self.validate()

    def validate(self) -> None:
        if self.total_iterations < 0:
            raise InvalidParameterError(f"total_iterations must be >= 0, got {self.total_iterations}")
        if not 0 <= self.switch_iteration <= self.total_iterations:
            raise InvalidParameterError(
                f"switch_iteration must lie in [0, {self.total_iterations}], got {self.switch_iteration}"
            )
        if self.samples_per_obs < 1:
            raise InvalidParameterError(f"samples_per_obs must be >= 1, got {self.samples_per_obs}")
        if self.ridge < 0:
            raise InvalidParameterError(f"ridge must be >= 0, got {self.ridge}")
        if self.early_stop_tol is not None and self.early_stop_tol <= 0:
            raise InvalidParameterError(f"early_stop_tol must be positive, got {self.early_stop_tol}")
        if self.jobs is not None and self.jobs < 1:
            raise InvalidParameterError(f"jobs must be >= 1, got {self.jobs}")

    def backend_for(self, iteration: int) -> BackendKind:
        """Backend used at ``iteration``; resolves the SISA-then-LISA schedule."""
        if self.estep_backend == BackendKind.SISA_THEN_LISA:
            return BackendKind.SISA if iteration < self.switch_iteration else BackendKind.LISA
        return self.estep_backend


@dataclass
class IterationRecord:
    iteration: int
    backend: str
    q_value: float
    log_likelihood: float
    mean_ess: float
    min_ess: float
    clamp_count: int
    h_frobenius_change: float


@dataclass
class EmState:
    """Current estimate plus the history of the run."""

    h: MixingMatrix
    iteration: int = 0
    q_trace: List[float] = field(default_factory=list)
    stat_A: Optional[np.ndarray] = None
    stat_B: Optional[np.ndarray] = None
    history: List[IterationRecord] = field(default_factory=list)
    h_trace: List[MixingMatrix] = field(default_factory=list)
    stopped_early: bool = False


def master_entropy(rng: SeedLike) -> int:
    """Master entropy for the substreams; a Generator contributes one draw."""
    if rng is None:
        return 0
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2 ** 63))
    seed = int(rng)
    if seed < 0:
        raise InvalidParameterError(f"seed must be nonnegative, got {seed}")
    return seed


def observation_rng(master_seed: int, iteration: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=master_seed, spawn_key=(iteration, index)))


def _estimate_one(backend: EstepBackend, y: np.ndarray, master_seed: int, iteration: int, index: int) -> ObservationResult:
    try:
        return backend.estimate(y, observation_rng(master_seed, iteration, index))
    except DegenerateWeightsError as exc:
        raise exc.with_context(observation=index, iteration=iteration) from exc


def _run_backend(backend: EstepBackend, data: Dataset, master_seed: int, iteration: int, jobs: int) -> List[ObservationResult]:
    observations = data.observations
    if jobs <= 1 or data.n == 1:
        return [_estimate_one(backend, y, master_seed, iteration, i) for i, y in enumerate(observations)]

    results: List[Optional[ObservationResult]] = [None] * data.n
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        futures = {
            executor.submit(_estimate_one, backend, y, master_seed, iteration, i): i
            for i, y in enumerate(observations)
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return results


def e_step(
    data: Dataset,
    h_current: MatrixLike,
    config: EmConfig,
    prior: Any,
    noise: NoiseModel,
    rng: SeedLike = None,
    iteration: int = 0,
) -> Tuple[np.ndarray, np.ndarray, Dict[str, Any]]:
    """
    One E-step pass over the data.

    Degenerate-weight errors are re-raised carrying the observation index and
    iteration.

    Args:
        data: Observations to condition on
        h_current: Mixing matrix the posteriors are computed under
        config: Backend schedule, sample count and worker count
        prior: DirichletParams, or DiscretePrior for the discrete backend
        noise: Noise model
        rng: Master seed, or a Generator supplying one
        iteration: Iteration index; selects the backend and the substreams

    Returns:
        ``(stat_A, stat_B, diagnostics)`` with stat_A = sum y_i E[z_i]' (d x k),
        stat_B = sum E[z_i z_i'] (k x k) and the ESS, clamp and log-likelihood
        summaries of the pass
    """
    h = as_mixing_matrix(h_current)
    if data.d != h.d:
        raise DimensionMismatchError(f"data has d = {data.d}, H has {h.d} rows")
    kind = config.backend_for(iteration)
    backend = create_backend(
        kind, prior, noise,
        samples=config.samples_per_obs,
        sigma_z2=config.sigma_z2,
        grid_resolution=config.grid_resolution,
        ess_warn_fraction=config.ess_warn_fraction,
    )
    backend.prepare(h)
    master_seed = master_entropy(rng)
    results = _run_backend(backend, data, master_seed, iteration, config.jobs or 1)

    z_means = np.stack([r.estimate.z_mean for r in results])
    zz_means = np.stack([r.estimate.zz_mean for r in results])
    stat_A = data.observations.T @ z_means
    stat_B = symmetrize(zz_means.sum(axis=0))

    ess = np.array([r.estimate.ess for r in results])
    clamp_count = sum(r.clamped for r in results)
    diagnostics = {
        "backend": kind.value,
        "mean_ess": float(np.mean(ess)),
        "min_ess": float(np.min(ess)),
        "clamp_count": int(clamp_count),
        "log_likelihood": float(math.fsum(r.estimate.log_evidence for r in results)),
    }
    if clamp_count:
        logger.info(f"LISA concentration clamped for {clamp_count} of {data.n} observations at iteration {iteration}")
    return stat_A, stat_B, diagnostics


def m_step(stat_A: np.ndarray, stat_B: np.ndarray, ridge: float = 1e-10) -> MixingMatrix:
    """
    Solve H (stat_B + ridge Tr(stat_B)/k I) = stat_A with a Cholesky factorization.

    Raises ``FactorizationError`` (with the smallest eigenvalue) when the
    regularized stat_B is not positive definite.
    """
    stat_A = np.asarray(stat_A, dtype=float)
    stat_B = np.asarray(stat_B, dtype=float)
    k = stat_B.shape[0]
    if stat_B.shape != (k, k) or stat_A.ndim != 2 or stat_A.shape[1] != k:
        raise DimensionMismatchError(f"stat_A {stat_A.shape} and stat_B {stat_B.shape} do not agree")
    if ridge < 0:
        raise InvalidParameterError(f"ridge must be >= 0, got {ridge}")
    b = symmetrize(stat_B)
    b = b + ridge * np.trace(b) / k * np.eye(k)
    return MixingMatrix(spd_solve(b, stat_A.T, what="sum of E[zz']").T)


def q_value(h: MatrixLike, stat_A: np.ndarray, stat_B: np.ndarray, noise: NoiseModel, n: int) -> float:
    """
    H-dependent part of the EM surrogate: -(Tr(H'H stat_B) - 2 Tr(H' stat_A)) / (2 sigma2).

    Terms that do not depend on H (the data norm, the prior and the Gaussian
    normalizer, all of which scale with ``n``) are dropped.
    """
    h = as_mixing_matrix(h).entries
    if n < 1:
        raise InvalidParameterError(f"n must be positive, got {n}")
    if stat_A.shape != h.shape or stat_B.shape != (h.shape[1], h.shape[1]):
        raise DimensionMismatchError(f"statistics {stat_A.shape}, {stat_B.shape} do not match H {h.shape}")
    quadratic = float(np.sum((h.T @ h) * stat_B))
    linear = float(np.sum(h * stat_A))
    return -(quadratic - 2.0 * linear) / (2.0 * noise.sigma2)


def relative_change(h_new: MixingMatrix, h_old: MixingMatrix) -> float:
    scale = np.linalg.norm(h_old.entries)
    diff = np.linalg.norm(h_new.entries - h_old.entries)
    return float(diff / scale) if scale > 0 else float(diff)


def run_em(
    data: Dataset,
    init: MatrixLike,
    config: EmConfig,
    prior: Any,
    noise: NoiseModel,
    rng: SeedLike = None,
) -> EmState:
    """
    Run ``config.total_iterations`` EM iterations from ``init``.

    ``q_trace[t]`` is the EM lower bound at the updated estimate,
    ``L(H_t) + q_value(H_{t+1}) - q_value(H_t)`` with both q_value terms taken on
    the statistics of iteration t and L(H_t) the E-step's log-evidence sum. With
    exact E-steps it is non-decreasing.

    Args:
        data: Observations
        init: Starting mixing matrix, usually the VCA estimate
        config: Iteration count, E-step schedule and sampler settings
        prior: DirichletParams, or DiscretePrior for the discrete backend
        noise: Known noise model
        rng: Master seed, or a Generator supplying one

    Returns:
        EmState holding the final H, the H and q trajectories and the
        per-iteration diagnostics

    Raises:
        EmStepError: An E- or M-step failed; carries the iteration index
    """
    h = as_mixing_matrix(init)
    if h.d != data.d:
        raise DimensionMismatchError(f"initial H has d = {h.d}, data has d = {data.d}")
    master_seed = master_entropy(rng)
    state = EmState(h=h, h_trace=[h])
    logger.info(
        f"Starting EM: {config.total_iterations} iterations, backend {config.estep_backend.value}, "
        f"N = {data.n}, M = {config.samples_per_obs}"
    )

    for iteration in range(config.total_iterations):
        try:
            stat_A, stat_B, diagnostics = e_step(data, state.h, config, prior, noise, master_seed, iteration)
            h_new = m_step(stat_A, stat_B, config.ridge)
        except PrismError as exc:
            logger.error(f"EM failed at iteration {iteration}: {exc}")
            raise EmStepError(iteration, exc) from exc

        gain = q_value(h_new, stat_A, stat_B, noise, data.n) - q_value(state.h, stat_A, stat_B, noise, data.n)
        bound = diagnostics["log_likelihood"] + gain
        change = relative_change(h_new, state.h)
        state.q_trace.append(bound)
        state.history.append(IterationRecord(
            iteration=iteration,
            backend=diagnostics["backend"],
            q_value=bound,
            log_likelihood=diagnostics["log_likelihood"],
            mean_ess=diagnostics["mean_ess"],
            min_ess=diagnostics["min_ess"],
            clamp_count=diagnostics["clamp_count"],
            h_frobenius_change=change,
        ))
        state.h = h_new
        state.h_trace.append(h_new)
        state.stat_A, state.stat_B = stat_A, stat_B
        state.iteration = iteration + 1
        logger.debug(
            f"EM iteration {iteration}: q = {bound:.6f}, mean ESS = {diagnostics['mean_ess']:.1f}, "
            f"dH = {change:.3e}"
        )

        if config.early_stop_tol is not None and change < config.early_stop_tol:
            logger.info(f"EM stopped early at iteration {iteration} (relative change {change:.3e})")
            state.stopped_early = True
            break

    logger.info(f"EM finished after {state.iteration} iterations")
    return state


TRAJECTORY_COLUMNS = ["iteration", "q_value", "mean_ess", "h_frobenius_change"]


def trajectory_frame(state: EmState) -> pd.DataFrame:
    """Per-iteration trajectory as a DataFrame with the exported columns."""
    rows = [{column: getattr(record, column) for column in TRAJECTORY_COLUMNS} for record in state.history]
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)
