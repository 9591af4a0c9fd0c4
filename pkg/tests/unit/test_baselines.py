import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pyprism.baselines import (
    METRIC_COLUMNS,
    MetricRecord,
    exhaustive_permutation_mse,
    metric_frame,
    permutation_mse,
    vca,
    vca_indices,
)
from pyprism.errors import DimensionMismatchError, InvalidParameterError, RankDeficiencyError
from pyprism.model import Dataset


class TestPermutationMse:
    def test_identity(self, rng):
        h = rng.uniform(size=(5, 3))
        record = permutation_mse(h, h)
        assert record.mse == 0.0
        assert record.permutation == (0, 1, 2)

    def test_recovers_column_permutation(self, rng):
        h = rng.uniform(size=(6, 4))
        h_est = h[:, [2, 0, 3, 1]]
        record = permutation_mse(h, h_est)
        assert record.mse == pytest.approx(0.0, abs=1e-24)
        for i, j in enumerate(record.permutation):
            assert np.array_equal(h_est[:, j], h[:, i])

    def test_unnormalized_sum(self):
        h = np.eye(3)[:, :2]
        h_est = h + np.array([[0.1, 0.0], [0.0, 0.2], [0.0, 0.0]])
        assert permutation_mse(h, h_est).mse == pytest.approx(0.05)

    @pytest.mark.parametrize("k", [2, 4, 6])
    def test_agrees_with_exhaustive(self, rng, k):
        for _ in range(5):
            h, h_est = rng.normal(size=(5, k)), rng.normal(size=(5, k))
            assert permutation_mse(h, h_est).mse == pytest.approx(exhaustive_permutation_mse(h, h_est).mse)

    @given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
    def test_symmetric_in_arguments(self, k, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(5, k)), rng.normal(size=(5, k))
        assert permutation_mse(a, b).mse == pytest.approx(permutation_mse(b, a).mse, rel=1e-12)

    @given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
    def test_invariant_to_shared_permutation(self, k, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.normal(size=(5, k)), rng.normal(size=(5, k))
        order = rng.permutation(k)
        assert permutation_mse(a[:, order], b[:, order]).mse == pytest.approx(permutation_mse(a, b).mse, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            permutation_mse(np.eye(3), np.eye(3)[:, :2])

    def test_exhaustive_limit(self):
        with pytest.raises(InvalidParameterError):
            exhaustive_permutation_mse(np.eye(9), np.eye(9))

    def test_record_snapshot(self):
        record = permutation_mse(np.eye(2), np.eye(2), method="lisa", seed=3, snr_db=20.0, n_samples=100,
                                 m_samples=500)
        assert record.to_row() == {"method": "lisa", "seed": 3, "snr_db": 20.0, "n_samples": 100,
                                   "m_samples": 500, "mse": 0.0}
        frame = metric_frame([record, record])
        assert list(frame.columns) == METRIC_COLUMNS
        assert len(frame) == 2

    def test_record_requires_bijection(self):
        with pytest.raises(InvalidParameterError):
            MetricRecord(mse=0.0, permutation=(0, 0, 1))


class TestVca:
    def test_finds_pure_pixels(self, rng):
        h = rng.uniform(size=(8, 4))
        z = np.vstack([rng.dirichlet(np.ones(4), size=300), np.eye(4)])
        data = Dataset(rng.permutation(z) @ h.T)
        estimate = vca(data, 4, rng)
        assert estimate.entries.shape == (8, 4)
        assert permutation_mse(h, estimate).mse < 1e-20

    def test_indices_are_distinct(self, small_problem, rng):
        data, _, _, _ = small_problem
        indices = vca_indices(data, 3, rng)
        assert len(set(indices)) == 3

    def test_rank_deficient_data(self, rng):
        data = Dataset(np.tile(rng.uniform(size=5), (20, 1)))
        with pytest.raises(RankDeficiencyError):
            vca(data, 3, rng)

    def test_too_few_observations(self, rng):
        with pytest.raises(InvalidParameterError):
            vca(Dataset(rng.uniform(size=(2, 5))), 3, rng)
