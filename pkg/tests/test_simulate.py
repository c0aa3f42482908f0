"""Forward simulation of the data-generating process."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import linalg

from treevar.core import DimensionError, TreevarError
from treevar.simulate import DgpSpec, simulate_dgp


def _basic_spec(**overrides):
    kwargs = dict(
        M=2, P=1, T=50,
        A=np.array([[0.0, 0.5, 0.1], [0.0, -0.2, 0.4]]),
        Gamma=np.array([[1.0], [0.5]]),
    )
    kwargs.update(overrides)
    return DgpSpec(**kwargs)


def test_simulation_is_deterministic():
    spec = _basic_spec()
    data1, truth1 = simulate_dgp(spec, seed=42)
    data2, truth2 = simulate_dgp(spec, seed=42)
    assert_array_equal(data1.Y, data2.Y)
    assert_array_equal(truth1.q, truth2.q)
    _, truth3 = simulate_dgp(spec, seed=43)
    assert not np.array_equal(truth1.q, truth3.q)


def test_naming_and_shape_conventions():
    data, truth = simulate_dgp(_basic_spec(T=30, n_modifiers=3), seed=1)
    assert data.Y.shape == (30, 2)
    assert data.Z.shape == (30, 3)
    assert data.variable_names == ["y0", "y1"]
    assert data.modifier_names == ["z0", "z1", "z2"]
    assert list(data.dates[:2]) == ["t0000", "t0001"]
    assert truth.Beta.shape == (30, 2, 3)
    assert truth.R.shape == (30, 1)
    assert truth.sigma2.shape == (30, 2)


def test_beta_law_callable_is_echoed_exactly():
    def law(Z):
        B = np.zeros((Z.shape[0], 2, 3))
        B[:, 0, 1] = np.where(Z[:, 0] > 0.5, 0.3, -0.3)
        return B

    spec = _basic_spec(beta_law=law, T=40)
    data, truth = simulate_dgp(spec, seed=0)
    assert_array_equal(truth.Beta, law(truth.Z))
    assert set(np.unique(truth.Beta[:, 0, 1])) == {-0.3, 0.3}


def test_constant_and_array_laws():
    spec = _basic_spec(r_law=2.0, sigma2_law=0.25, T=20)
    _, truth = simulate_dgp(spec, seed=0)
    assert_array_equal(truth.R, np.full((20, 1), 2.0))
    assert_array_equal(truth.sigma2, np.full((20, 2), 0.25))

    path = np.linspace(0.5, 1.5, 20)[:, None]
    _, truth = simulate_dgp(_basic_spec(r_law=path, T=20), seed=0)
    assert_array_equal(truth.R, path)


def test_law_shape_mismatch_raises():
    with pytest.raises(DimensionError, match="shape"):
        simulate_dgp(_basic_spec(r_law=lambda Z: np.ones((3, 1))), seed=0)


def test_nonpositive_variance_law_raises():
    with pytest.raises(TreevarError, match="positive"):
        simulate_dgp(_basic_spec(sigma2_law=0.0), seed=0)


def test_bad_dimensions_raise():
    with pytest.raises(DimensionError, match="A must be"):
        simulate_dgp(_basic_spec(A=np.zeros((2, 2))), seed=0)
    with pytest.raises(DimensionError, match="Gamma"):
        simulate_dgp(_basic_spec(Gamma=np.ones((3, 1))), seed=0)
    with pytest.raises(DimensionError, match="Z"):
        simulate_dgp(_basic_spec(Z=np.ones((7, 2))), seed=0)
    with pytest.raises(DimensionError, match="y_init"):
        simulate_dgp(_basic_spec(y_init=np.zeros((2, 2))), seed=0)


def test_explosive_coefficients_rejected_unless_allowed():
    A = np.array([[0.0, 1.3, 0.0], [0.0, 0.0, 0.2]])
    with pytest.raises(TreevarError, match="explosive"):
        simulate_dgp(_basic_spec(A=A, T=10), seed=0)
    data, _ = simulate_dgp(_basic_spec(A=A, T=10, explosive_ok=True), seed=0)
    assert np.isfinite(data.Y).all()


def test_unit_root_is_within_tolerance():
    A = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.5]])
    data, _ = simulate_dgp(_basic_spec(A=A, T=15), seed=3)
    assert data.Y.shape == (15, 2)


def test_time_varying_law_can_cross_explosive_boundary():
    def law(Z):
        B = np.zeros((Z.shape[0], 2, 3))
        B[Z[:, 0] > 0.5, 0, 1] = 0.9       # pushes 0.5 own-lag to 1.4
        return B

    with pytest.raises(TreevarError, match="period"):
        simulate_dgp(_basic_spec(beta_law=law, T=30), seed=0)


def test_presample_lags_feed_first_period():
    spec = _basic_spec(T=1, sigma2_law=1e-12, Gamma=np.zeros((2, 1)),
                       y_init=np.array([[1.0, 2.0]]))
    data, _ = simulate_dgp(spec, seed=0)
    expected = spec.A @ np.array([1.0, 1.0, 2.0])
    assert_allclose(data.Y[0], expected, atol=1e-5)


def test_stationary_moments_match_lyapunov_solution():
    A1 = np.array([[0.6, 0.15], [-0.1, 0.4]])
    spec = DgpSpec(
        M=2, P=1, T=120_000,
        A=np.column_stack([np.zeros(2), A1]),
        Gamma=np.array([[0.8], [-0.4]]),
        r_law=1.5, sigma2_law=0.09,
    )
    data, truth = simulate_dgp(spec, seed=7)
    cov_eps = truth.Gamma @ truth.Gamma.T * 1.5 + np.eye(2) * 0.09
    target = linalg.solve_discrete_lyapunov(A1, cov_eps)
    sample = np.cov(data.Y.T)
    assert_allclose(sample, target, rtol=0.05, atol=0.01)
    assert abs(data.Y.mean(axis=0)).max() < 0.05


def test_intercept_sets_stationary_mean():
    A1 = np.array([[0.5, 0.0], [0.0, 0.3]])
    c = np.array([0.8, -0.35])
    spec = DgpSpec(
        M=2, P=1, T=80_000,
        A=np.column_stack([c, A1]),
        Gamma=np.zeros((2, 1)),
        sigma2_law=0.04,
    )
    data, _ = simulate_dgp(spec, seed=11)
    mean_target = np.linalg.solve(np.eye(2) - A1, c)
    assert_allclose(data.Y.mean(axis=0), mean_target, atol=0.02)


def test_factor_draws_follow_variance_law():
    def r_law(Z):
        return np.where(Z[:, :1] > 0.5, 9.0, 1.0)

    spec = _basic_spec(T=40_000, r_law=r_law)
    _, truth = simulate_dgp(spec, seed=5)
    hi = truth.Z[:, 0] > 0.5
    assert np.var(truth.q[hi, 0]) == pytest.approx(9.0, rel=0.1)
    assert np.var(truth.q[~hi, 0]) == pytest.approx(1.0, rel=0.1)
