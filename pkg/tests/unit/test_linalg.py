import numpy as np
import pytest
from pyprism.errors import FactorizationError, RankDeficiencyError
from pyprism.linalg import eig_range, has_full_column_rank, pinv, psd_sqrt, require_full_column_rank, spd_solve


def test_pinv_full_column_rank(rng):
    a = rng.normal(size=(6, 3))
    assert np.allclose(pinv(a), np.linalg.solve(a.T @ a, a.T))


def test_pinv_rank_deficient_penrose_conditions(rng):
    a = rng.normal(size=(5, 2)) @ rng.normal(size=(2, 4))
    g = pinv(a)
    assert np.allclose(a @ g @ a, a)
    assert np.allclose(g @ a @ g, g)
    assert np.allclose(a @ g, (a @ g).T)
    assert np.allclose(g @ a, (g @ a).T)


def test_rank_checks():
    assert has_full_column_rank(np.eye(3))
    assert not has_full_column_rank(np.zeros((3, 2)))
    with pytest.raises(RankDeficiencyError, match="not full column rank"):
        require_full_column_rank(np.ones((4, 2)), "H")


def test_spd_solve(rng):
    r = rng.normal(size=(4, 4))
    a = r @ r.T + 4 * np.eye(4)
    b = rng.normal(size=(4, 2))
    assert np.allclose(a @ spd_solve(a, b), b)


def test_spd_solve_reports_smallest_eigenvalue():
    with pytest.raises(FactorizationError) as info:
        spd_solve(np.diag([1.0, -2.0]), np.ones(2), what="test matrix")
    assert info.value.smallest_eigenvalue == pytest.approx(-2.0)
    assert "test matrix" in str(info.value)


def test_psd_sqrt_keeps_null_space():
    c = np.array([[1.0, -1.0], [-1.0, 1.0]]) / 12
    root = psd_sqrt(c)
    assert np.allclose(root @ root, c)
    assert np.allclose(root @ np.ones(2), 0.0)


def test_eig_range():
    assert eig_range(np.diag([3.0, -1.0, 2.0])) == pytest.approx((-1.0, 3.0))
