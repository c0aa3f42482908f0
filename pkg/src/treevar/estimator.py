"""Scikit-learn style estimator wrapping the Gibbs sampler and analysis tools."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from . import analysis, store
from .core import ModelConfig, Dataset, TreevarError
from .sampler import SamplerPlan, run_mcmc

__all__ = ["TreeTvpVar"]


class TreeTvpVar(BaseEstimator):
    """Tree-driven time-varying-parameter VAR with factor stochastic volatility.

    VAR coefficients follow latent factors modeled by sums of regression
    trees over user-supplied effect modifiers; reduced-form errors carry a
    low-rank factor structure whose factor variances are themselves tree
    functions of the modifiers. Estimation is by Gibbs sampling.

    Parameters mirror :class:`treevar.ModelConfig`; see its docstring for
    meanings. All are plain keyword arguments so the estimator composes with
    scikit-learn tooling (``get_params`` / ``set_params`` / ``clone``).

    Attributes
    ----------
    draws_ : PosteriorDraws
        Retained posterior draws, set by :meth:`fit`.

    Examples
    --------
    >>> model = TreeTvpVar(P=1, n_draws=200, n_burn=100, seed=3)
    >>> model.fit(Y, Z)                                   # doctest: +SKIP
    >>> shocks = model.identify_shocks(flags, ("y0", "y1"))  # doctest: +SKIP
    """

    def __init__(self, P=1, Q_beta=2, Q_q=2, S_beta=20, S_q=20, alpha=0.95,
                 zeta=2.0, kappa=2.0, n_min=5, B_v=0.01, include_intercept=True,
                 n_draws=15000, n_burn=5000, thin=1, seed=0,
                 constant_coefficients=False, n_threads=1, store_beta=True,
                 store_trees=True):
        self.P = P
        self.Q_beta = Q_beta
        self.Q_q = Q_q
        self.S_beta = S_beta
        self.S_q = S_q
        self.alpha = alpha
        self.zeta = zeta
        self.kappa = kappa
        self.n_min = n_min
        self.B_v = B_v
        self.include_intercept = include_intercept
        self.n_draws = n_draws
        self.n_burn = n_burn
        self.thin = thin
        self.seed = seed
        self.constant_coefficients = constant_coefficients
        self.n_threads = n_threads
        self.store_beta = store_beta
        self.store_trees = store_trees

    def _config(self) -> ModelConfig:
        keys = [f for f in ModelConfig.__dataclass_fields__]
        return ModelConfig(**{k: getattr(self, k) for k in keys})

    def fit(self, Y, Z, variable_names=None, modifier_names=None, dates=None):
        """Run the sampler on an endogenous panel Y and modifiers Z.

        Parameters
        ----------
        Y : ndarray, shape (T, M)
            Endogenous variables, one column per series.
        Z : ndarray, shape (T, N)
            Effect modifiers aligned with Y.
        variable_names, modifier_names : sequence of str, optional
            Column labels; defaults are ``y0..`` and ``z0..``.
        dates : sequence of str, optional
            Period labels; defaults are ``t0000..``.

        Returns
        -------
        self
        """
        Y = np.asarray(Y, dtype=float)
        Z = np.asarray(Z, dtype=float)
        if Y.ndim != 2 or Z.ndim != 2:
            raise TreevarError("Y and Z must be two-dimensional arrays")
        T = Y.shape[0]
        data = Dataset(
            Y=Y, Z=Z,
            variable_names=list(variable_names) if variable_names is not None
            else [f"y{m}" for m in range(Y.shape[1])],
            modifier_names=list(modifier_names) if modifier_names is not None
            else [f"z{n}" for n in range(Z.shape[1])],
            dates=list(dates) if dates is not None
            else [f"t{t:04d}" for t in range(T)],
        )
        config = self._config()
        plan = SamplerPlan.from_config(
            config, n_threads=self.n_threads, store_beta=self.store_beta,
            store_trees=self.store_trees)
        self.draws_ = run_mcmc(config, data, plan=plan)
        return self

    def _check_fitted(self):
        if not hasattr(self, "draws_"):
            raise TreevarError("estimator is not fitted; call fit first")

    def identify_shocks(self, recession_flags, target_vars):
        """Label the business-cycle shock in every retained draw.

        ``target_vars`` gives (output, unemployment) by name or column index.
        Returns the per-draw list of shock identifications (factor index,
        sign, scale, conflict flag).
        """
        self._check_fitted()
        return analysis.identify_all_draws(
            self.draws_, recession_flags,
            [self._var_index(v) for v in target_vars])

    def _var_index(self, v) -> int:
        names = list(self.draws_.variable_names)
        if isinstance(v, str):
            if v not in names:
                raise TreevarError(f"unknown variable {v!r}")
            return names.index(v)
        return int(v)

    def impulse_responses(self, shocks, horizons=16, times=None):
        """Time-varying impulse responses to the identified shock per draw."""
        self._check_fitted()
        return analysis.time_varying_irf(self.draws_, shocks,
                                         horizons=horizons, times=times)

    def average_impulse_responses(self, result, quantiles=(16, 50, 84)):
        """Posterior quantiles of time-averaged impulse responses."""
        return analysis.average_irf(result, quantiles=quantiles)

    def phillips_multiplier(self, result, price_var, unemp_var):
        """Per-draw ratio of price to unemployment responses by horizon."""
        self._check_fitted()
        names = list(self.draws_.variable_names)
        irf = result.responses.mean(axis=1)
        return analysis.phillips_multiplier(irf[..., names.index(price_var)],
                                            irf[..., names.index(unemp_var)])

    def scenario(self, z_star, m):
        """Coefficient paths for equation m if modifiers were set to z_star."""
        self._check_fitted()
        return analysis.scenario_paths(self.draws_, z_star, m)

    def waic(self, subset: Optional[Sequence] = None):
        """Widely applicable information criterion, optionally on a subset.

        ``subset`` lists variables to score jointly, by name or column index;
        omitted means all variables.

        Returns
        -------
        tuple of float
            (waic, lpd, penalty).
        """
        self._check_fitted()
        if subset is None:
            loglik = self.draws_.loglik
        else:
            mask = np.zeros(self.draws_.Y.shape[1], dtype=bool)
            for s in subset:
                mask[self._var_index(s)] = True
            loglik = analysis.subset_loglik(self.draws_, mask)
        return analysis.waic(loglik)

    def save(self, directory, **kwargs):
        """Persist the retained draws and a reproducibility manifest."""
        self._check_fitted()
        return store.save_draws(self.draws_, directory, **kwargs)

    @classmethod
    def from_store(cls, directory):
        """Rebuild a fitted estimator from a saved draw store."""
        draws = store.load_draws(directory)
        est = cls(**{k: getattr(draws.config, k)
                     for k in ModelConfig.__dataclass_fields__})
        est.draws_ = draws
        return est
