import logging

import numpy as np
import pytest
from pyprism.errors import DegenerateCovarianceError, InvalidParameterError, RankDeficiencyError, UnsupportedProposalError
from pyprism.model import MixingMatrix, NoiseModel, random_mixing_matrix
from pyprism.posterior import (
    GaussianConditioner,
    LmmseMoments,
    PriorProposal,
    TruncatedGaussian,
    dirichlet_from_moments,
    high_snr_limits,
    high_snr_proposal,
    lisa_proposal,
    lmmse_conditioner,
    lmmse_moments,
    moore_penrose_residuals,
    proposal_log_density,
    sisa_proposal,
    truncated_gaussian_rejection,
)
from pyprism.simplex import DirichletParams, centering_projection, dirichlet_logpdf, dirichlet_moments


@pytest.fixture
def model(rng):
    prior = DirichletParams([1.0, 2.0, 3.0])
    h = random_mixing_matrix(5, 3, rng)
    return h, prior


class TestLmmse:
    def test_matches_textbook_formula(self, model, rng):
        h, prior = model
        noise = NoiseModel(0.05)
        moments = dirichlet_moments(prior)
        y = rng.normal(size=5)
        a = h.entries
        s = a @ moments.cov @ a.T + noise.sigma2 * np.eye(5)
        gain = moments.cov @ a.T @ np.linalg.inv(s)
        result = lmmse_moments(y, h, prior, noise)
        assert np.allclose(result.mean, moments.mean + gain @ (y - a @ moments.mean))
        assert np.allclose(result.cov, moments.cov - gain @ a @ moments.cov)

    def test_stays_on_affine_hull(self, model, rng):
        h, prior = model
        result = lmmse_moments(rng.normal(size=5), h, prior, NoiseModel(0.3))
        assert result.mean.sum() == pytest.approx(1.0)
        assert np.allclose(result.cov @ np.ones(3), 0.0, atol=1e-12)

    def test_stacked_means(self, model, rng):
        h, prior = model
        conditioner = lmmse_conditioner(h, prior, NoiseModel(0.1))
        ys = rng.normal(size=(4, 5))
        assert np.allclose(conditioner.mean(ys), [conditioner.mean(y) for y in ys])

    def test_conditioner_checks_moment_shapes(self, model):
        h, _ = model
        with pytest.raises(ValueError):
            GaussianConditioner(h, np.zeros(2), np.eye(2), NoiseModel(1.0))

    def test_converges_to_high_snr_limit(self, model, rng):
        h, prior = model
        y = rng.normal(size=5)
        limits = high_snr_limits(h, 3)
        result = lmmse_moments(y, h, prior, NoiseModel(1e-8))
        assert np.allclose(result.mean, limits.mean(y), atol=1e-4)

    def test_high_snr_mean_recovers_noise_free_latent(self, model):
        h, _ = model
        z = np.array([0.1, 0.6, 0.3])
        assert np.allclose(high_snr_limits(h, 3).mean(h.entries @ z), z, atol=1e-10)

    def test_identity_limits(self):
        limits = high_snr_limits(np.eye(3), 3)
        assert np.allclose(limits.gain, centering_projection(3), atol=1e-12)
        assert np.allclose(limits.offset, np.full(3, 1 / 3), atol=1e-12)
        y = np.array([0.4, -0.1, 2.0])
        assert np.allclose(limits.mean(y), centering_projection(3) @ y + 1 / 3, atol=1e-12)

    def test_mean_converges_linearly_in_noise(self):
        h = MixingMatrix(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0],
                                   [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]]))
        prior = DirichletParams([1.0, 2.0, 3.0])
        y = h.entries @ np.array([0.2, 0.5, 0.3]) + np.array([0.01, -0.02, 0.0, 0.03, -0.01])
        limit = high_snr_limits(h, 3).mean(y)
        sigma2 = 10.0 ** -np.arange(4, 11)
        errors = np.array([np.linalg.norm(lmmse_moments(y, h, prior, NoiseModel(s)).mean - limit) for s in sigma2])
        scaled = errors / sigma2
        assert scaled.min() > 0
        assert np.allclose(scaled, scaled[-1], rtol=0.1)


class TestDirichletFromMoments:
    def test_matches_mean_and_total_variance(self):
        lmmse = LmmseMoments(mean=np.array([0.2, 0.3, 0.5]), cov=1e-3 * centering_projection(3))
        proposal = dirichlet_from_moments(lmmse)
        assert not proposal.clamped
        moments = dirichlet_moments(proposal.alpha_bar)
        assert np.allclose(moments.mean, proposal.m_tilde)
        assert np.trace(moments.cov) == pytest.approx(np.trace(lmmse.cov))

    def test_clamps_when_variance_too_large(self):
        lmmse = LmmseMoments(mean=np.array([0.2, 0.3, 0.5]), cov=10.0 * centering_projection(3))
        proposal = dirichlet_from_moments(lmmse)
        assert proposal.clamped
        assert proposal.mu == pytest.approx(3 * 1e-3 / 0.2)
        assert proposal.alpha_bar.alpha.min() >= 1e-3

    def test_projects_infeasible_mean(self):
        lmmse = LmmseMoments(mean=np.array([1.4, -0.2, -0.2]), cov=1e-4 * centering_projection(3))
        proposal = dirichlet_from_moments(lmmse)
        assert proposal.m_tilde.sum() == pytest.approx(1.0)
        assert proposal.m_tilde.min() > 0
        assert np.all(proposal.alpha_bar.alpha >= 1e-3)

    def test_rejects_zero_trace(self):
        with pytest.raises(DegenerateCovarianceError):
            dirichlet_from_moments(LmmseMoments(mean=np.array([0.5, 0.5]), cov=np.zeros((2, 2))))

    def test_lisa_approaches_prior_as_noise_grows(self, model):
        h, prior = model
        y = h.entries @ np.array([0.2, 0.3, 0.5])
        errors = [
            np.linalg.norm(lisa_proposal(y, h, prior, NoiseModel(s)).alpha_bar.alpha - prior.alpha)
            / np.linalg.norm(prior.alpha)
            for s in (1e2, 1e4, 1e6, 1e8, 1e10)
        ]
        assert np.all(np.diff(errors) < 0)
        assert errors[-1] < 1e-8


class TestProposals:
    def test_sisa_is_prior(self):
        prior = DirichletParams.symmetric(3, 2.0)
        proposal = sisa_proposal(prior)
        assert isinstance(proposal, PriorProposal)
        assert proposal.params == prior

    def test_prior_density_matches_logpdf(self, rng):
        proposal = sisa_proposal(DirichletParams([2.0, 3.0, 4.0]))
        batch = proposal.sample(5, rng)
        assert np.allclose(proposal.log_density(batch), [dirichlet_logpdf(proposal.params, z) for z in batch.z])
        assert proposal_log_density(proposal, batch.z[0]) == pytest.approx(proposal.log_density(batch)[0])

    def test_lisa_concentrates_near_latent(self, model, rng):
        h, prior = model
        z = np.array([0.2, 0.5, 0.3])
        noise = NoiseModel(1e-5)
        proposal = lisa_proposal(h.entries @ z, h, prior, noise)
        draws = proposal.sample(2000, rng)
        assert np.allclose(draws.z.mean(axis=0), z, atol=0.01)
        assert draws.log_z is not None

    def test_truncated_gaussian_cannot_weight(self):
        proposal = TruncatedGaussian(LmmseMoments(mean=np.array([0.5, 0.5]), cov=0.01 * centering_projection(2)))
        with pytest.raises(UnsupportedProposalError, match="unsupported"):
            proposal_log_density(proposal, np.array([0.5, 0.5]))
        with pytest.raises(UnsupportedProposalError):
            proposal.log_density(proposal.sample(3, np.random.default_rng(0)))


class TestHighSnr:
    def test_proposal_scale(self, model):
        h, _ = model
        noise = NoiseModel(1e-4)
        proposal = high_snr_proposal(h.entries @ np.array([0.3, 0.3, 0.4]), h, noise, c=2.0)
        assert proposal.mu == pytest.approx(2e4)
        assert np.allclose(proposal.m_tilde, [0.3, 0.3, 0.4], atol=1e-6)
        assert np.allclose(proposal.lmmse.cov, 1e-4 * high_snr_limits(h, 3).cov_limit)

    def test_rejects_nonpositive_c(self, model):
        h, _ = model
        with pytest.raises(InvalidParameterError):
            high_snr_proposal(np.zeros(5), h, NoiseModel(1.0), c=0.0)

    def test_requires_full_rank(self):
        with pytest.raises(RankDeficiencyError):
            high_snr_limits(MixingMatrix(np.ones((4, 3))), 3)

    def test_moore_penrose_residuals_vanish(self, model):
        h, prior = model
        residuals = moore_penrose_residuals(h, prior)
        assert set(residuals) == {"mpm_eq_m", "pmp_eq_p", "mp_symmetric", "pm_symmetric",
                                  "m_vs_hp_pinv", "hp_pinv_hp_vs_p"}
        assert max(residuals.values()) < 1e-8


class TestRejectionSampler:
    def test_accepts_on_simplex(self, rng):
        moments = LmmseMoments(mean=np.array([0.3, 0.3, 0.4]), cov=1e-3 * centering_projection(3))
        samples, rate = truncated_gaussian_rejection(moments, 500, 100_000, rng)
        assert samples.shape == (500, 3)
        assert np.all(samples >= 0)
        assert np.allclose(samples.sum(axis=1), 1.0)
        assert 0.9 < rate <= 1.0

    def test_gives_up_far_outside(self, rng, caplog):
        moments = LmmseMoments(mean=np.array([3.0, -1.0, -1.0]), cov=1e-4 * centering_projection(3))
        with caplog.at_level(logging.WARNING, logger="pyprism.posterior"):
            samples, rate = truncated_gaussian_rejection(moments, 10, 2000, rng)
        assert samples.shape == (0, 3)
        assert rate == 0.0
        assert "accepted 0 of 10" in caplog.text
