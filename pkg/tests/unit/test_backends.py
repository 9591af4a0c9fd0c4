import numpy as np
import pytest
from pyprism.backends import (
    BackendKind,
    DiscreteBackend,
    GaussianBackend,
    LisaBackend,
    OracleBackend,
    SisaBackend,
    create_backend,
)
from pyprism.closed_form import DiscretePrior, gaussian_posterior_estimate
from pyprism.errors import InvalidParameterError
from pyprism.model import MixingMatrix, NoiseModel
from pyprism.simplex import DirichletParams


def test_parse_is_lenient_about_case():
    assert BackendKind.parse(" LISA ") is BackendKind.LISA
    assert BackendKind.parse(BackendKind.ORACLE) is BackendKind.ORACLE


def test_parse_rejects_unknown():
    with pytest.raises(InvalidParameterError, match="sisa_then_lisa"):
        BackendKind.parse("gibbs")


@pytest.mark.parametrize(
    "kind, cls",
    [("sisa", SisaBackend), ("lisa", LisaBackend), ("oracle", OracleBackend), ("gaussian", GaussianBackend)],
)
def test_factory(kind, cls):
    backend = create_backend(kind, DirichletParams.symmetric(3), NoiseModel(0.1), samples=20)
    assert isinstance(backend, cls)
    assert backend.name == kind


def test_factory_rejects_schedule():
    with pytest.raises(InvalidParameterError, match="schedule"):
        create_backend(BackendKind.SISA_THEN_LISA, DirichletParams.symmetric(3), NoiseModel(0.1))


def test_factory_checks_prior_type():
    with pytest.raises(InvalidParameterError):
        create_backend("discrete", DirichletParams.symmetric(3), NoiseModel(0.1))
    with pytest.raises(InvalidParameterError):
        create_backend("sisa", DiscretePrior(np.eye(3)), NoiseModel(0.1))
    assert isinstance(create_backend("discrete", DiscretePrior(np.eye(3)), NoiseModel(0.1)), DiscreteBackend)


def test_oracle_limited_to_small_k():
    with pytest.raises(InvalidParameterError):
        create_backend("oracle", DirichletParams.symmetric(4), NoiseModel(0.1))


def test_estimate_requires_prepare(rng):
    backend = create_backend("sisa", DirichletParams.symmetric(3), NoiseModel(0.1), samples=10)
    with pytest.raises(RuntimeError, match="before prepare"):
        backend.estimate(np.zeros(4), rng)


def test_prepare_checks_columns():
    backend = create_backend("lisa", DirichletParams.symmetric(3), NoiseModel(0.1), samples=10)
    with pytest.raises(InvalidParameterError):
        backend.prepare(MixingMatrix(np.eye(4)))


def test_lisa_caches_conditioner(small_problem, rng):
    data, h, prior, noise = small_problem
    backend = create_backend("lisa", prior, noise, samples=64)
    backend.prepare(h)
    assert backend.conditioner is not None
    result = backend.estimate(data.observations[0], rng)
    assert result.estimate.sample_count == 64
    assert isinstance(result.clamped, bool)


def test_gaussian_backend_is_exact(rng):
    h = MixingMatrix(rng.normal(size=(4, 2)))
    backend = create_backend("gaussian", None, NoiseModel(0.2), sigma_z2=3.0)
    backend.prepare(h)
    y = rng.normal(size=4)
    result = backend.estimate(y, rng)
    expected = gaussian_posterior_estimate(y, h, 3.0, NoiseModel(0.2))
    assert np.allclose(result.estimate.z_mean, expected.z_mean)
    assert not result.clamped
