"""Post-estimation analytics.

Variance shares of the error factors, business-cycle-shock identification with
sign and scale normalization, time-varying impulse responses through the
companion form, Phillips multipliers, scenario evaluation of the time-varying
coefficients at counterfactual modifier values, and WAIC.

Everything here is pure post-processing over immutable draws; units are
whatever the inputs are in (the estimator layer converts to raw units).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .core import IdentificationError, TreevarError
from .sampler import PosteriorDraws
from .trees import Ensemble

__all__ = [
    "ShockId",
    "IrfResult",
    "variance_share",
    "identify_bc_shock",
    "identify_all_draws",
    "irf",
    "companion_matrix",
    "time_varying_irf",
    "average_irf",
    "phillips_multiplier",
    "scenario_tvp",
    "scenario_paths",
    "subset_loglik",
    "waic",
]


@dataclass
class ShockId:
    """Identification of the business-cycle factor within one draw."""

    factor: int          # index j into the error factors
    sign: int            # +1 or -1, chosen so the output impact is negative
    scale: float         # kappa: |impact| rescaled to one in-sample output SD
    conflict: bool = False  # unemployment impact failed to come out positive

    def impact(self, Gamma: np.ndarray) -> np.ndarray:
        """The normalized impact vector s * kappa * gamma_j."""
        return self.sign * self.scale * Gamma[:, self.factor]


@dataclass
class IrfResult:
    """Impulse responses: draws x times x horizons x variables."""

    responses: np.ndarray          # (D, n_times, H, M)
    horizons: int
    times: np.ndarray              # time indices the IRFs were computed at
    shocks: List[ShockId]
    n_explosive: int = 0           # draws whose companion spectral radius > 1
    variable_names: Optional[list] = None


def variance_share(Gamma: np.ndarray, R_t: np.ndarray, Sigma_t: np.ndarray, j: int):
    """Share of each variable's error variance explained by factor j.

    diag(r_jt gamma_j gamma_j') / diag(Gamma R_t Gamma' + Sigma_t), elementwise
    over variables. ``R_t`` (Q,) and ``Sigma_t`` (M,) give one period's shares;
    (T, Q) and (T, M) arrays give a (T, M) path.

    Raises
    ------
    TreevarError
        If any total variance in the denominator is not strictly positive.
    """
    Gamma = np.asarray(Gamma, dtype=float)
    R_t = np.asarray(R_t, dtype=float)
    Sigma_t = np.asarray(Sigma_t, dtype=float)
    gj2 = Gamma[:, j] ** 2                              # (M,)
    if R_t.ndim == 1:
        num = R_t[j] * gj2
        den = (Gamma**2) @ R_t + Sigma_t
    else:
        num = R_t[:, j, None] * gj2[None, :]            # (T, M)
        den = R_t @ (Gamma**2).T + Sigma_t
    if np.any(den <= 0):
        raise TreevarError("total error variance must be strictly positive")
    return num / den


def identify_bc_shock(
    Gamma: np.ndarray,
    R: np.ndarray,
    sigma2: np.ndarray,
    recession_flags: np.ndarray,
    target_vars: Sequence[int],
    output_series: np.ndarray,
) -> ShockId:
    """Label the business-cycle factor of one draw and fix its sign and scale.

    The factor is the one with the largest mean, over flagged periods, of the
    summed variance shares of the two target variables (output first,
    unemployment second). The sign makes the output impact negative; if the
    unemployment impact then fails to be positive, the draw is flagged as a sign
    conflict (the sign is still set by output alone). The scale kappa makes the
    output impact equal one in-sample standard deviation of the output series.

    Raises
    ------
    IdentificationError
        If no period is flagged, or the selected factor has a numerically zero
        output loading (no scale exists).
    """
    flags = np.asarray(recession_flags, dtype=bool)
    if not flags.any():
        raise IdentificationError("no flagged period; cannot identify the shock")
    out_var, unemp_var = int(target_vars[0]), int(target_vars[1])
    Q = Gamma.shape[1]
    score = np.empty(Q)
    for j in range(Q):
        zeta = variance_share(Gamma, R, sigma2, j)       # (T, M)
        score[j] = float(np.mean(zeta[flags][:, [out_var, unemp_var]].sum(axis=1)))
    j = int(np.argmax(score))
    g_out = float(Gamma[out_var, j])
    if abs(g_out) < 1e-300:
        raise IdentificationError("selected factor has zero output loading")
    sign = -1 if g_out > 0 else 1
    scale = float(np.std(np.asarray(output_series, dtype=float))) / abs(g_out)
    conflict = sign * float(Gamma[unemp_var, j]) <= 0.0
    return ShockId(factor=j, sign=sign, scale=scale, conflict=conflict)


def identify_all_draws(
    draws: PosteriorDraws,
    recession_flags: np.ndarray,
    target_vars: Sequence[int],
) -> List[ShockId]:
    """identify_bc_shock applied to every retained draw.

    The output series used for the one-SD scale is the stored training data of
    the draws object (same units as Gamma), so scale and loadings stay coherent.
    """
    out = []
    output_series = draws.Y[:, int(target_vars[0])]
    for d in range(draws.n_retained):
        out.append(identify_bc_shock(
            draws.Gamma[d], draws.R[d], draws.sigma2[d],
            recession_flags, target_vars, output_series,
        ))
    return out


def companion_matrix(coeffs: np.ndarray, P: int, include_intercept: bool = True) -> np.ndarray:
    """Companion form of one period's VAR coefficients (intercept excluded).

    ``coeffs`` is the (M, K) matrix A + B_t whose columns follow the design
    layout: optional intercept first, then P lag blocks of M columns each.
    """
    M = coeffs.shape[0]
    off = 1 if include_intercept else 0
    C = np.zeros((M * P, M * P))
    C[:M, :] = coeffs[:, off:off + M * P]
    if P > 1:
        C[M:, :-M] = np.eye(M * (P - 1))
    return C


def irf(
    coeffs: np.ndarray,
    impact: np.ndarray,
    horizons: int,
    P: int,
    include_intercept: bool = True,
) -> np.ndarray:
    """Impulse responses of one draw at one period, horizons 1..H.

    Row 0 is the impact response (reported as horizon 1); row h is the top-M
    block of C^h applied to the stacked impact, with C the companion matrix of
    the period's coefficients. Returns an (horizons, M) array.
    """
    impact = np.asarray(impact, dtype=float)
    M = impact.size
    out = np.empty((horizons, M))
    out[0] = impact
    if horizons == 1:
        return out
    C = companion_matrix(np.asarray(coeffs, dtype=float), P, include_intercept)
    state = np.zeros(M * P)
    state[:M] = impact
    for h in range(1, horizons):
        state = C @ state
        out[h] = state[:M]
    return out


def time_varying_irf(
    draws: PosteriorDraws,
    shocks: Sequence[ShockId],
    horizons: int = 16,
    times: Optional[np.ndarray] = None,
) -> IrfResult:
    """IRFs for every retained draw at the requested periods.

    Each draw's impact is its shock's normalized s*kappa*gamma_j; the period-t
    propagation uses A + B_t frozen at t. Explosive companion draws (spectral
    radius > 1 at any requested t) are kept and counted, not truncated.
    """
    cfg = draws.config
    D = draws.n_retained
    T = draws.T
    M = draws.A.shape[1]
    if times is None:
        times = np.arange(T)
    times = np.asarray(times, dtype=int)
    if draws.Beta is None and not cfg.constant_coefficients:
        raise TreevarError("draws were stored without Beta; IRFs need B_t")
    resp = np.empty((D, times.size, horizons, M))
    n_explosive = 0
    for d in range(D):
        impact = shocks[d].impact(draws.Gamma[d])
        explosive = False
        for i, t in enumerate(times):
            coeffs = draws.A[d].copy()
            if not cfg.constant_coefficients:
                coeffs += draws.Beta[d, t]
            resp[d, i] = irf(coeffs, impact, horizons, cfg.P, cfg.include_intercept)
            if not explosive:
                C = companion_matrix(coeffs, cfg.P, cfg.include_intercept)
                if np.max(np.abs(np.linalg.eigvals(C))) > 1.0 + 1e-8:
                    explosive = True
        n_explosive += int(explosive)
    return IrfResult(responses=resp, horizons=horizons, times=times,
                     shocks=list(shocks), n_explosive=n_explosive,
                     variable_names=draws.variable_names)


def average_irf(result: IrfResult, quantiles=(16, 50, 84)) -> np.ndarray:
    """Time-averaged IRF summaries: mean over periods within each draw, then
    the requested percentiles over draws. Returns (len(quantiles), H, M)."""
    draw_means = result.responses.mean(axis=1)          # (D, H, M)
    return np.percentile(draw_means, quantiles, axis=0)


def phillips_multiplier(
    irf_price: np.ndarray, irf_unemp: np.ndarray, tol: float = 1e-12
) -> np.ma.MaskedArray:
    """Price response divided by unemployment response, horizon by horizon.

    Entries where |unemployment response| <= tol are masked (undefined) rather
    than returned as numbers.
    """
    p = np.asarray(irf_price, dtype=float)
    u = np.asarray(irf_unemp, dtype=float)
    undefined = np.abs(u) <= tol
    safe = np.where(undefined, 1.0, u)
    return np.ma.MaskedArray(p / safe, mask=undefined)


def scenario_tvp(
    Lambda: np.ndarray, ensembles: Sequence[Ensemble], z_star: np.ndarray
) -> np.ndarray:
    """Coefficient state implied by holding the modifiers at z_star.

    beta* = Lambda F(z_star), with F evaluated from the draw's coefficient-factor
    ensembles; the idiosyncratic deviation is set to zero (it has no
    counterfactual value at a hypothetical z).
    """
    z = np.asarray(z_star, dtype=float)
    F = np.array([sum(t.evaluate_row(z) for t in e.trees) for e in ensembles])
    return np.asarray(Lambda, dtype=float) @ F


def scenario_paths(
    draws: PosteriorDraws, z_star: np.ndarray, m: int
) -> np.ndarray:
    """scenario_tvp for equation m across all retained draws: (D, K)."""
    if draws.mean_trees is None:
        raise TreevarError("draws were stored without trees; scenarios need them")
    D = draws.n_retained
    K = draws.A.shape[2]
    out = np.empty((D, K))
    for d in range(D):
        ensembles = [Ensemble.from_json_obj(o) for o in draws.mean_trees[d][m]]
        out[d] = scenario_tvp(draws.Lambda[d, m], ensembles, z_star)
    return out


def scenario_irf(
    draws: PosteriorDraws,
    shocks: Sequence[ShockId],
    z_star: np.ndarray,
    horizons: int = 16,
) -> tuple:
    """IRFs with every equation's coefficients pinned to their z_star values.

    Per draw, the coefficient matrix is A + Lambda_m F_m(z_star) row by row
    (idiosyncratic deviations zero) and the impact is the draw's identified,
    normalized shock. Returns (responses, n_explosive) with responses of shape
    (D, horizons, M); explosive draws are counted, not dropped.
    """
    D, M = draws.A.shape[:2]
    tvp = not draws.config.constant_coefficients
    if tvp and draws.mean_trees is None:
        raise TreevarError("draws were stored without trees; scenarios need them")
    if len(shocks) != D:
        raise TreevarError("need one identified shock per retained draw")
    P = draws.config.P
    intercept = draws.config.include_intercept
    out = np.empty((D, horizons, M))
    n_explosive = 0
    for d in range(D):
        coeffs = draws.A[d].copy()
        if tvp:
            for m in range(M):
                ensembles = [Ensemble.from_json_obj(o)
                             for o in draws.mean_trees[d][m]]
                coeffs[m] += scenario_tvp(draws.Lambda[d, m], ensembles, z_star)
        C = companion_matrix(coeffs, P, intercept)
        if np.abs(np.linalg.eigvals(C)).max() > 1.0 + 1e-8:
            n_explosive += 1
        out[d] = irf(coeffs, shocks[d].impact(draws.Gamma[d]), horizons, P,
                     intercept)
    return out, n_explosive


def subset_loglik(draws: PosteriorDraws, subset: np.ndarray) -> np.ndarray:
    """Per-draw per-period log-likelihood marginalized to a variable subset.

    Recomputed from the stored draw blocks; if the draws carry scalers the
    result is corrected to raw units for exactly the subset variables.
    """
    from .core import log_likelihood_path

    subset = np.asarray(subset, dtype=bool)
    constant = draws.config.constant_coefficients
    if not constant and draws.Beta is None:
        raise TreevarError("draws were stored without Beta; subset likelihoods need B_t")
    D = draws.n_retained
    out = np.empty((D, draws.T))
    for d in range(D):
        Beta = None if constant else draws.Beta[d]
        out[d] = log_likelihood_path(draws.Y, draws.X, draws.A[d], Beta,
                                     draws.Gamma[d], draws.R[d], draws.sigma2[d],
                                     subset=subset)
    if draws.scalers is not None:
        out -= float(np.sum([math.log(s.range)
                             for s, keep in zip(draws.scalers, subset) if keep]))
    return out


def waic(loglik: np.ndarray) -> tuple:
    """WAIC = -2(lpd_hat - p_hat) from a (draws, T) pointwise log-likelihood.

    lpd_hat sums, over periods, the log of the draw-averaged density (computed
    by log-sum-exp); p_hat sums the across-draw variances of the pointwise log
    densities (the effective number of parameters).

    Returns (waic, lpd_hat, p_hat). Requires at least two draws.
    """
    ll = np.asarray(loglik, dtype=float)
    if ll.ndim != 2 or ll.shape[0] < 2:
        raise TreevarError("waic needs a (draws >= 2, T) log-likelihood matrix")
    D = ll.shape[0]
    lpd = float(np.sum(logsumexp(ll, axis=0) - math.log(D)))
    p = float(np.sum(np.var(ll, axis=0, ddof=1)))
    return (-2.0 * (lpd - p), lpd, p)
