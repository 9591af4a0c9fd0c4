"""
PyPrism - maximum-likelihood simplex unmixing by Monte Carlo EM.

Observations y = H z + w are modeled with Dirichlet latents z on the simplex and
isotropic Gaussian noise w. The mixing matrix H is estimated by EM whose
E-step expectations are computed by normalized importance sampling, with
either the prior (SISA) or an LMMSE-matched Dirichlet (LISA) as proposal.

Example:
    import numpy as np
    from pyprism import DirichletParams, EmConfig, NoiseModel, generate_data, random_mixing_matrix, run_em, vca

    rng = np.random.default_rng(0)
    prior = DirichletParams.symmetric(4)
    h = random_mixing_matrix(10, 4, rng)
    data = generate_data(h, prior, NoiseModel(1e-3), 1000, rng)
    state = run_em(data, vca(data, 4, rng), EmConfig(total_iterations=20, switch_iteration=10), prior,
                   NoiseModel(1e-3), rng=0)
"""

import logging

__version__ = "1.0.0"

from .backends import BackendKind, create_backend
from .baselines import MetricRecord, exhaustive_permutation_mse, permutation_mse, vca
from .closed_form import (
    AtomEnumeration,
    DiscretePrior,
    discrete_posterior_moments,
    gaussian_posterior_estimate,
    gaussian_posterior_moments,
)
from .config import ExperimentConfig, load_config
from .em import EmConfig, EmState, e_step, m_step, q_value, run_em
from .errors import (
    DegenerateCovarianceError,
    DegenerateWeightsError,
    DimensionMismatchError,
    EmStepError,
    FactorizationError,
    InvalidParameterError,
    ParseError,
    PrismError,
    RankDeficiencyError,
    SingularDensityError,
    UnsupportedProposalError,
)
from .estep import (
    PosteriorEstimate,
    brute_force_posterior,
    effective_sample_size,
    importance_estimate,
    marginal_log_likelihood,
)
from .model import (
    Dataset,
    MixingMatrix,
    NoiseModel,
    generate_data,
    log_likelihood_y_given_z,
    random_mixing_matrix,
    sigma2_for_snr_db,
    snr,
    snr_db,
)
from .posterior import (
    LmmseDirichlet,
    LmmseMoments,
    PriorProposal,
    TruncatedGaussian,
    high_snr_proposal,
    lisa_proposal,
    lmmse_moments,
    moore_penrose_residuals,
    proposal_log_density,
    sisa_proposal,
    truncated_gaussian_rejection,
)
from .simplex import (
    DirichletMoments,
    DirichletParams,
    centering_projection,
    dirichlet_logpdf,
    dirichlet_moments,
    dirichlet_sample,
    project_to_simplex,
)

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = [
    "AtomEnumeration",
    "BackendKind",
    "Dataset",
    "DegenerateCovarianceError",
    "DegenerateWeightsError",
    "DimensionMismatchError",
    "DirichletMoments",
    "DirichletParams",
    "DiscretePrior",
    "EmConfig",
    "EmState",
    "EmStepError",
    "ExperimentConfig",
    "FactorizationError",
    "InvalidParameterError",
    "LmmseDirichlet",
    "LmmseMoments",
    "MetricRecord",
    "MixingMatrix",
    "NoiseModel",
    "ParseError",
    "PosteriorEstimate",
    "PriorProposal",
    "PrismError",
    "RankDeficiencyError",
    "SingularDensityError",
    "TruncatedGaussian",
    "UnsupportedProposalError",
    "brute_force_posterior",
    "centering_projection",
    "create_backend",
    "dirichlet_logpdf",
    "dirichlet_moments",
    "dirichlet_sample",
    "discrete_posterior_moments",
    "e_step",
    "effective_sample_size",
    "exhaustive_permutation_mse",
    "gaussian_posterior_estimate",
    "gaussian_posterior_moments",
    "generate_data",
    "high_snr_proposal",
    "importance_estimate",
    "lisa_proposal",
    "lmmse_moments",
    "load_config",
    "log_likelihood_y_given_z",
    "m_step",
    "marginal_log_likelihood",
    "moore_penrose_residuals",
    "permutation_mse",
    "project_to_simplex",
    "proposal_log_density",
    "q_value",
    "random_mixing_matrix",
    "run_em",
    "sigma2_for_snr_db",
    "sisa_proposal",
    "snr",
    "snr_db",
    "truncated_gaussian_rejection",
    "vca",
    "__version__",
]
