import os

import hypothesis
import numpy as np
import pytest

from pyprism import DirichletParams, NoiseModel, generate_data, random_mixing_matrix

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fast"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem(rng):
    """d = 5, k = 3 problem at moderate noise."""
    prior = DirichletParams.symmetric(3)
    h = random_mixing_matrix(5, 3, rng)
    noise = NoiseModel(0.01)
    data = generate_data(h, prior, noise, 50, rng)
    return data, h, prior, noise
