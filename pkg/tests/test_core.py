"""Configuration validation, lag design, scaling, and the model log-likelihood."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from treevar import (
    ConfigError,
    Dataset,
    DegenerateScaleError,
    DimensionError,
    ModelConfig,
    build_design,
    fit_scaler,
    log_likelihood_path,
    validate_config,
)

from conftest import small_dataset


# ---------------------------------------------------------------------------
# ModelConfig validation
# ---------------------------------------------------------------------------


def test_default_config_is_valid():
    cfg = ModelConfig()
    assert validate_config(cfg) is cfg


@pytest.mark.parametrize(
    "field, value",
    [
        ("P", 0),
        ("P", 1.5),
        ("alpha", 0.0),
        ("alpha", 1.0),
        ("zeta", 1.0),
        ("Q_beta", -1),
        ("Q_q", 0),
        ("S_beta", 0),
        ("S_q", 0),
        ("B_v", 0.0),
        ("kappa", 0.0),
        ("n_min", 0),
        ("n_draws", 0),
        ("n_burn", -1),
        ("thin", 0),
    ],
)
def test_invalid_config_names_field(field, value):
    cfg = ModelConfig(**{field: value})
    with pytest.raises(ConfigError) as exc:
        validate_config(cfg)
    assert field in str(exc.value)


def test_burn_must_be_below_draws():
    with pytest.raises(ConfigError, match="n_burn"):
        validate_config(ModelConfig(n_draws=100, n_burn=100))


def test_config_replace_returns_new_instance():
    cfg = ModelConfig()
    cfg2 = cfg.replace(P=3)
    assert cfg.P == 1 and cfg2.P == 3


# ---------------------------------------------------------------------------
# Dataset validation
# ---------------------------------------------------------------------------


def _dataset(Y, Z, dates=None):
    T, M = np.asarray(Y).shape
    N = np.asarray(Z).shape[1]
    return Dataset(
        Y=Y, Z=Z,
        variable_names=[f"y{m}" for m in range(M)],
        modifier_names=[f"z{n}" for n in range(N)],
        dates=dates if dates is not None else [str(t) for t in range(T)],
    )


def test_dataset_rejects_row_mismatch():
    with pytest.raises(DimensionError):
        _dataset(np.zeros((4, 2)), np.zeros((3, 1)), dates=["0", "1", "2", "3"])


def test_dataset_rejects_nans():
    Y = np.zeros((4, 2))
    Y[2, 0] = np.nan
    with pytest.raises(DimensionError):
        _dataset(Y, np.zeros((4, 1)))


def test_dataset_rejects_wrong_label_lengths():
    with pytest.raises(DimensionError):
        Dataset(Y=np.zeros((3, 2)), Z=np.zeros((3, 1)),
                variable_names=["a"], modifier_names=["z"],
                dates=["0", "1", "2"])


# ---------------------------------------------------------------------------
# Lag design
# ---------------------------------------------------------------------------


def test_build_design_two_vars_one_lag_no_intercept():
    Y = np.array([[1.0, 10.0], [2.0, 20.0], [3.0, 30.0]])
    d = build_design(_dataset(Y, np.arange(3)[:, None]), P=1, include_intercept=False)
    assert d.K == 2
    assert_array_equal(d.X, np.array([[1.0, 10.0], [2.0, 20.0]]))
    assert_array_equal(d.Y, Y[1:])
    assert d.dates == ["1", "2"]


def test_build_design_univariate_two_lags():
    Y = np.array([1.0, 2.0, 3.0, 4.0])[:, None]
    d = build_design(_dataset(Y, np.zeros((4, 1))), P=2, include_intercept=False)
    assert_array_equal(d.X, np.array([[2.0, 1.0], [3.0, 2.0]]))
    d = build_design(_dataset(Y, np.zeros((4, 1))), P=2, include_intercept=True)
    assert_array_equal(d.X, np.array([[1.0, 2.0, 1.0], [1.0, 3.0, 2.0]]))


def test_build_design_column_count():
    ds = small_dataset(T=20, M=12)
    d = build_design(ds, P=5, include_intercept=True)
    assert d.K == 61
    assert d.X.shape == (15, 61)


def test_build_design_lag_block_order():
    # row t must read (1, y'_{t-1}, y'_{t-2}): most recent lag first
    Y = np.array([[1.0, -1.0], [2.0, -2.0], [3.0, -3.0], [4.0, -4.0]])
    d = build_design(_dataset(Y, np.zeros((4, 1))), P=2, include_intercept=True)
    assert_array_equal(d.X[0], np.array([1.0, 2.0, -2.0, 1.0, -1.0]))
    assert_array_equal(d.X[1], np.array([1.0, 3.0, -3.0, 2.0, -2.0]))


def test_build_design_needs_enough_rows():
    with pytest.raises(DimensionError):
        build_design(small_dataset(T=3), P=2, include_intercept=True)
    with pytest.raises(DimensionError):
        build_design(small_dataset(T=10), P=0, include_intercept=True)


def test_build_design_trims_modifiers_and_dates_together():
    ds = small_dataset(T=10)
    d = build_design(ds, P=3, include_intercept=True)
    assert_array_equal(d.Z, ds.Z[3:])
    assert list(d.dates) == list(ds.dates[3:])


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------


def test_scaler_midpoint_and_endpoints():
    s = fit_scaler([0.0, 10.0])
    assert s.forward(5.0) == 0.0
    assert s.forward(0.0) == -0.5
    assert s.forward(10.0) == 0.5

    s = fit_scaler([-1.0, 3.0])
    assert s.forward(3.0) == 0.5
    assert s.forward(-1.0) == -0.5

    s = fit_scaler([2.0, 4.0, 6.0])
    assert s.forward(4.0) == 0.0
    assert s.inverse(0.25) == 5.0
    assert s.range == 4.0


def test_scaler_round_trip():
    rng = np.random.default_rng(1)
    x = rng.normal(3.0, 10.0, 200)
    s = fit_scaler(x)
    assert_allclose(s.inverse(s.forward(x)), x, atol=1e-12)
    u = s.forward(x)
    assert u.min() == -0.5 and u.max() == 0.5


def test_scaler_rejects_constant_series():
    with pytest.raises(DegenerateScaleError):
        fit_scaler([3.0, 3.0, 3.0])
    with pytest.raises(DegenerateScaleError):
        fit_scaler([np.nan, 1.0])


# ---------------------------------------------------------------------------
# Log-likelihood
# ---------------------------------------------------------------------------


def _loglik_case(seed=0, T=6, M=3, K=2, Q=2):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(T, M))
    X = rng.normal(size=(T, K))
    A = rng.normal(size=(M, K))
    Beta = rng.normal(scale=0.1, size=(T, M, K))
    Gamma = rng.normal(size=(M, Q))
    R = rng.uniform(0.5, 2.0, (T, Q))
    sigma2 = rng.uniform(0.2, 1.0, (T, M))
    return Y, X, A, Beta, Gamma, R, sigma2


def test_loglik_matches_multivariate_normal():
    Y, X, A, Beta, Gamma, R, sigma2 = _loglik_case()
    ll = log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2)
    for t in range(Y.shape[0]):
        mean = (A + Beta[t]) @ X[t]
        cov = Gamma @ np.diag(R[t]) @ Gamma.T + np.diag(sigma2[t])
        ref = stats.multivariate_normal(mean, cov).logpdf(Y[t])
        assert_allclose(ll[t], ref, rtol=1e-10)


def test_loglik_permutation_invariant():
    Y, X, A, Beta, Gamma, R, sigma2 = _loglik_case(seed=3)
    perm = np.array([2, 0, 1])
    ll = log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2)
    ll_p = log_likelihood_path(Y[:, perm], X, A[perm], Beta[:, perm],
                               Gamma[perm], R, sigma2[:, perm])
    assert_allclose(ll_p, ll, rtol=1e-12)


def test_loglik_factorizes_when_independent():
    # Gamma = 0 makes variables independent: full loglik = sum of marginals
    Y, X, A, Beta, Gamma, R, sigma2 = _loglik_case(seed=5)
    Gamma = np.zeros_like(Gamma)
    full = log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2)
    parts = np.zeros_like(full)
    for m in range(Y.shape[1]):
        mask = np.zeros(Y.shape[1], dtype=bool)
        mask[m] = True
        parts += log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2, subset=mask)
    assert_allclose(parts, full, rtol=1e-12)


def test_loglik_subset_matches_marginal_normal():
    Y, X, A, Beta, Gamma, R, sigma2 = _loglik_case(seed=7)
    mask = np.array([True, False, True])
    ll = log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2, subset=mask)
    idx = np.flatnonzero(mask)
    for t in range(Y.shape[0]):
        mean = ((A + Beta[t]) @ X[t])[idx]
        cov = (Gamma @ np.diag(R[t]) @ Gamma.T + np.diag(sigma2[t]))[np.ix_(idx, idx)]
        ref = stats.multivariate_normal(mean, cov).logpdf(Y[t, idx])
        assert_allclose(ll[t], ref, rtol=1e-10)


def test_loglik_constant_coefficients_beta_none():
    Y, X, A, Beta, Gamma, R, sigma2 = _loglik_case(seed=9)
    ll_none = log_likelihood_path(Y, X, A, None, Gamma, R, sigma2)
    ll_zero = log_likelihood_path(Y, X, A, np.zeros_like(Beta), Gamma, R, sigma2)
    assert_allclose(ll_none, ll_zero, rtol=1e-14)


def test_loglik_rejects_bad_subset():
    Y, X, A, Beta, Gamma, R, sigma2 = _loglik_case()
    with pytest.raises(DimensionError):
        log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2,
                            subset=np.zeros(3, dtype=bool))
    with pytest.raises(DimensionError):
        log_likelihood_path(Y, X, A, Beta, Gamma, R, sigma2,
                            subset=np.ones(5, dtype=bool))
