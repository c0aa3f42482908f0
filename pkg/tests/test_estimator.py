"""Scikit-learn estimator facade: params, fit, delegation, persistence."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from sklearn.base import clone

from treevar import TreeTvpVar, analysis
from treevar.core import ModelConfig, TreevarError

from conftest import small_dataset


def _fitted(seed=0, **overrides):
    data = small_dataset(T=36, M=2)
    params = dict(P=1, Q_beta=1, Q_q=1, S_beta=2, S_q=2, n_min=2,
                  n_draws=40, n_burn=10, seed=seed)
    params.update(overrides)
    model = TreeTvpVar(**params)
    model.fit(data.Y, data.Z, variable_names=data.variable_names,
              modifier_names=data.modifier_names, dates=data.dates)
    return model, data


def test_get_params_covers_every_config_field():
    params = TreeTvpVar().get_params()
    assert set(ModelConfig.__dataclass_fields__) <= set(params)


def test_clone_and_set_params_round_trip():
    model = TreeTvpVar(P=3, S_beta=7, seed=11)
    twin = clone(model)
    assert twin.get_params() == model.get_params()
    model.set_params(S_beta=9)
    assert model.S_beta == 9 and twin.S_beta == 7


def test_fit_returns_self_and_sets_draws():
    model, data = _fitted()
    assert model.fit(data.Y, data.Z) is model
    d = model.draws_
    assert d.n_retained == 30
    assert d.A.shape == (30, 2, 3)
    assert d.variable_names == ["y0", "y1"]


def test_fit_rejects_flat_input():
    model = TreeTvpVar(n_draws=4, n_burn=1)
    with pytest.raises(TreevarError, match="two-dimensional"):
        model.fit(np.zeros(10), np.zeros((10, 1)))


def test_methods_require_fit():
    model = TreeTvpVar()
    for call in (lambda: model.identify_shocks(np.ones(5, bool), (0, 1)),
                 lambda: model.waic(),
                 lambda: model.scenario(np.zeros(2), 0),
                 lambda: model.save("/tmp/nowhere")):
        with pytest.raises(TreevarError, match="not fitted"):
            call()


def test_identify_shocks_accepts_names_and_indices():
    model, _ = _fitted()
    flags = np.zeros(model.draws_.T, dtype=bool)
    flags[5:12] = True
    by_name = model.identify_shocks(flags, ("y0", "y1"))
    by_index = model.identify_shocks(flags, (0, 1))
    assert len(by_name) == model.draws_.n_retained
    assert all(a == b for a, b in zip(by_name, by_index))
    with pytest.raises(TreevarError, match="unknown variable"):
        model.identify_shocks(flags, ("y0", "u_gap"))


def test_irf_pipeline_shapes_and_quantiles():
    model, _ = _fitted()
    flags = np.zeros(model.draws_.T, dtype=bool)
    flags[:6] = True
    shocks = model.identify_shocks(flags, (0, 1))
    result = model.impulse_responses(shocks, horizons=8, times=np.array([0, 10]))
    D = model.draws_.n_retained
    assert result.responses.shape == (D, 2, 8, 2)
    avg = model.average_impulse_responses(result, quantiles=(16, 50, 84))
    assert avg.shape == (3, 8, 2)
    assert np.all(avg[0] <= avg[1] + 1e-12) and np.all(avg[1] <= avg[2] + 1e-12)


def test_phillips_multiplier_matches_direct_computation():
    model, _ = _fitted()
    flags = np.zeros(model.draws_.T, dtype=bool)
    flags[:6] = True
    shocks = model.identify_shocks(flags, (0, 1))
    result = model.impulse_responses(shocks, horizons=6, times=np.array([3]))
    ratio = model.phillips_multiplier(result, price_var="y1", unemp_var="y0")
    irf = result.responses.mean(axis=1)
    expected = analysis.phillips_multiplier(irf[..., 1], irf[..., 0])
    assert_array_equal(np.asarray(ratio), np.asarray(expected))
    assert_array_equal(ratio.mask, expected.mask)


def test_scenario_shape():
    model, _ = _fitted()
    paths = model.scenario(np.zeros(2), m=0)
    assert paths.shape == (model.draws_.n_retained, model.draws_.X.shape[1])
    assert np.all(np.isfinite(paths))


def test_waic_subset_of_everything_matches_full():
    model, _ = _fitted()
    full = model.waic()
    named = model.waic(subset=["y0", "y1"])
    indexed = model.waic(subset=[0, 1])
    assert_allclose(named, full, rtol=1e-10)
    assert named == indexed
    with pytest.raises(TreevarError, match="unknown variable"):
        model.waic(subset=["spread"])


def test_waic_subset_drops_information():
    model, _ = _fitted()
    full = model.waic()
    part = model.waic(subset=["y0"])
    assert part != full
    assert np.isfinite(part).all()


def test_save_and_from_store_round_trip(tmp_path):
    model, _ = _fitted(seed=4)
    manifest = model.save(str(tmp_path / "run"))
    assert manifest.seed == 4
    back = TreeTvpVar.from_store(str(tmp_path / "run"))
    assert back.get_params()["S_beta"] == model.S_beta
    assert back.get_params()["seed"] == 4
    assert_array_equal(back.draws_.A, model.draws_.A)
    assert back.waic() == model.waic()
