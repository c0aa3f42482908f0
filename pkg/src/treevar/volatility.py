"""Volatility machinery.

Two blocks live here:

* heteroskedastic tree variances for the error factors: r_s(z_t) = exp(sum of
  variance-tree fits), sampled by squaring-and-logging the factor draws and
  linearizing the log chi-squared(1) error with a ten-component Gaussian mixture,
  after which each variance tree is a weighted-Gaussian BART update;
* a parametric AR(1) stochastic-volatility sampler for the idiosyncratic
  log-variances, using the same mixture linearization with forward-filter
  backward-sampling and conjugate/MH draws of the state-equation parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import TreevarError
from .shrinkage import sample_gig
from .trees import Ensemble, TreePriorParams, WeightedTarget, bart_sweep

__all__ = [
    "MixtureTable",
    "SvState",
    "FactorVolState",
    "linearize",
    "sample_mixture_indicators",
    "factor_variance",
    "heterobart_sweep",
    "sample_idio_sv",
    "draw_sv_prior",
]

# Ten-component Gaussian mixture approximation to the log chi-squared(1)
# density: weights, means, variances. Compiled-in; the moment identities
# (mean ~ digamma(1/2)+log 2, variance ~ pi^2/2) are asserted in tests.
_LOG_CHI2_PROBS = np.array(
    [0.00609, 0.04775, 0.13057, 0.20674, 0.22715,
     0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
_LOG_CHI2_MEANS = np.array(
    [1.92677, 1.34744, 0.73504, 0.02266, -0.85173,
     -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
_LOG_CHI2_VARS = np.array(
    [0.11265, 0.17788, 0.26768, 0.40611, 0.62699,
     0.98583, 1.57469, 2.54498, 4.16591, 7.33342])

DEFAULT_OFFSET = 1e-6


@dataclass
class MixtureTable:
    """Finite Gaussian mixture used to linearize a log chi-squared error."""

    probs: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.means = np.asarray(self.means, dtype=float)
        self.variances = np.asarray(self.variances, dtype=float)
        if not (self.probs.shape == self.means.shape == self.variances.shape):
            raise TreevarError("mixture component arrays must share one shape")
        if abs(float(self.probs.sum()) - 1.0) > 1e-10:
            raise TreevarError("mixture weights must sum to one")
        if np.any(self.variances <= 0) or np.any(self.probs < 0):
            raise TreevarError("mixture needs positive variances, nonnegative weights")
        self.log_probs = np.log(np.maximum(self.probs, 1e-300))
        self.log_variances = np.log(self.variances)

    @classmethod
    def log_chi2_1(cls) -> "MixtureTable":
        """The compiled-in ten-component approximation to log chi-squared(1)."""
        return cls(_LOG_CHI2_PROBS.copy(), _LOG_CHI2_MEANS.copy(), _LOG_CHI2_VARS.copy())

    @property
    def n_components(self) -> int:
        return self.probs.size

    def moments(self) -> tuple[float, float]:
        """Mean and variance of the mixture."""
        mean = float(self.probs @ self.means)
        second = float(self.probs @ (self.variances + self.means**2))
        return mean, second - mean**2


@dataclass
class SvState:
    """AR(1) stochastic-volatility state for one equation's idiosyncratic error.

    h is the T-vector of log variances; the state equation is
    h_t = mu_h + phi_h (h_{t-1} - mu_h) + N(0, sigma2_h) with stationary
    initialization h_1 ~ N(mu_h, sigma2_h / (1 - phi_h^2)).
    """

    h: np.ndarray
    mu_h: float = 0.0
    phi_h: float = 0.9
    sigma2_h: float = 0.1
    indicators: np.ndarray = None

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=float)
        if not abs(self.phi_h) < 1:
            raise TreevarError("phi_h must lie strictly inside (-1, 1)")
        if self.sigma2_h <= 0:
            raise TreevarError("sigma2_h must be positive")

    def variances(self) -> np.ndarray:
        return np.exp(np.clip(self.h, -700.0, 700.0))


@dataclass
class FactorVolState:
    """Tree-driven variance state of one error factor."""

    ensemble: Ensemble
    prior: TreePriorParams
    indicators: np.ndarray = None
    offset: float = DEFAULT_OFFSET
    last_counts: tuple = (0, 0)  # (accepted, proposed) of the latest sweep

    def __post_init__(self):
        if self.offset <= 0:
            raise TreevarError("offset must be positive")


def linearize(values, offset=DEFAULT_OFFSET):
    """log(value^2 + offset), elementwise."""
    v = np.asarray(values, dtype=float)
    out = np.log(v * v + offset)
    return float(out) if np.isscalar(values) else out


def sample_mixture_indicators(
    resid: np.ndarray, fit: np.ndarray, table: MixtureTable, rng: np.random.Generator
) -> np.ndarray:
    """Draw one mixture component per observation.

    P(component i at t) is proportional to w_i * Normal(resid_t; fit_t + m_i, v2_i),
    computed in log space so that jointly underflowing densities still normalize.
    """
    resid = np.asarray(resid, dtype=float)
    fit = np.asarray(fit, dtype=float)
    dev = resid[:, None] - fit[:, None] - table.means[None, :]
    logp = (table.log_probs[None, :]
            - 0.5 * table.log_variances[None, :]
            - 0.5 * dev * dev / table.variances[None, :])
    logp -= logp.max(axis=1, keepdims=True)
    p = np.exp(logp)
    cdf = np.cumsum(p, axis=1)
    u = rng.random(resid.size) * cdf[:, -1]
    return (u[:, None] > cdf).sum(axis=1)


def factor_variance(state: FactorVolState, z) -> np.ndarray:
    """r_s(z) = exp(sum of the factor's variance-tree fits at z); always positive."""
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    Z = z[None, :] if single else z
    log_r = np.zeros(Z.shape[0])
    for tree in state.ensemble.trees:
        log_r += np.array([tree.evaluate_row(row) for row in Z])
    r = np.exp(np.clip(log_r, -700.0, 700.0))
    return float(r[0]) if single else r


def heterobart_sweep(
    state: FactorVolState,
    q_draws: np.ndarray,
    Z: np.ndarray,
    rng: np.random.Generator,
    table: MixtureTable = None,
) -> FactorVolState:
    """One full update of a factor's variance trees given its factor path.

    Squares and logs the factor draws, resamples the mixture indicators against
    the current tree-sum fit, then runs a weighted-Gaussian backfitting sweep with
    target log(q^2 + offset) - m_indicator and per-row variances v2_indicator.
    """
    if table is None:
        table = MixtureTable.log_chi2_1()
    q = np.asarray(q_draws, dtype=float)
    u = linearize(q, state.offset)
    if state.ensemble.fits is None:
        state.ensemble.refresh_fits(Z)
    s = sample_mixture_indicators(u, state.ensemble.fit_total(), table, rng)
    state.indicators = s
    target = WeightedTarget(u - table.means[s], table.variances[s])
    state.last_counts = bart_sweep(state.ensemble, target, Z, rng, state.prior)
    return state


def _ffbs(y, w, mu, phi, sigma2, rng):
    """Sample an AR(1) path h with observations y_t = h_t + N(0, w_t)."""
    T = y.size
    af = np.empty(T)
    Pf = np.empty(T)
    a, P = mu, sigma2 / (1.0 - phi * phi)
    for t in range(T):
        if t > 0:
            a = mu + phi * (af[t - 1] - mu)
            P = phi * phi * Pf[t - 1] + sigma2
        K = P / (P + w[t])
        af[t] = a + K * (y[t] - a)
        Pf[t] = (1.0 - K) * P
    h = np.empty(T)
    h[-1] = rng.normal(af[-1], math.sqrt(Pf[-1]))
    for t in range(T - 2, -1, -1):
        denom = phi * phi * Pf[t] + sigma2
        gain = phi * Pf[t] / denom
        mean = af[t] + gain * (h[t + 1] - mu - phi * (af[t] - mu))
        var = Pf[t] - phi * gain * Pf[t]
        h[t] = rng.normal(mean, math.sqrt(max(var, 0.0)))
    return h


def _log_phi_prior(phi):
    # (phi + 1)/2 ~ Beta(25, 5) on (-1, 1)
    if not -1.0 < phi < 1.0:
        return -np.inf
    return 24.0 * math.log1p(phi) + 4.0 * math.log1p(-phi)


def _log_stationary_term(phi, dev0, sigma2):
    # density contribution of h_1 under the stationary initial condition,
    # keeping only the phi-dependent factors
    return 0.5 * math.log1p(-phi * phi) - (1.0 - phi * phi) * dev0 * dev0 / (2.0 * sigma2)


def sample_idio_sv(
    resid: np.ndarray,
    state: SvState,
    rng: np.random.Generator,
    table: MixtureTable = None,
    offset: float = DEFAULT_OFFSET,
) -> SvState:
    """One full update of an equation's stochastic-volatility block.

    Resamples mixture indicators, draws the log-variance path by forward-filter
    backward-sampling on the linearized state space, then updates mu_h (Gaussian),
    phi_h (independence MH around the conditional least-squares Gaussian, with the
    stationary-initialization correction in the ratio), and sigma2_h (GIG).
    """
    if table is None:
        table = MixtureTable.log_chi2_1()
    resid = np.asarray(resid, dtype=float)
    T = resid.size
    if T != state.h.size:
        raise TreevarError("residual length does not match the volatility path")
    u = linearize(resid, offset)
    s = sample_mixture_indicators(u, state.h, table, rng)
    state.indicators = s
    state.h = _ffbs(u - table.means[s], table.variances[s],
                    state.mu_h, state.phi_h, state.sigma2_h, rng)

    h, phi, sigma2 = state.h, state.phi_h, state.sigma2_h
    # mu_h | h, phi, sigma2 with N(0, 10) prior
    prec = 1.0 / 10.0 + (1.0 - phi * phi) / sigma2
    num = (1.0 - phi * phi) * h[0] / sigma2
    if T > 1:
        prec += (T - 1) * (1.0 - phi) ** 2 / sigma2
        num += (1.0 - phi) * float(np.sum(h[1:] - phi * h[:-1])) / sigma2
    state.mu_h = rng.normal(num / prec, math.sqrt(1.0 / prec))

    # phi_h | h, mu, sigma2: independence MH from the conditional-OLS Gaussian
    x = h - state.mu_h
    sxx = float(x[:-1] @ x[:-1]) if T > 1 else 0.0
    if sxx > 1e-12:
        phi_hat = float(x[1:] @ x[:-1]) / sxx
        prop = rng.normal(phi_hat, math.sqrt(sigma2 / sxx))
    else:
        prop = 2.0 * rng.beta(25.0, 5.0) - 1.0
    if -1.0 < prop < 1.0:
        log_alpha = (_log_phi_prior(prop) + _log_stationary_term(prop, x[0], sigma2)
                     - _log_phi_prior(phi) - _log_stationary_term(phi, x[0], sigma2))
        if sxx <= 1e-12:  # proposal was the prior itself; only the correction remains
            log_alpha = (_log_stationary_term(prop, x[0], sigma2)
                         - _log_stationary_term(phi, x[0], sigma2))
        if rng.random() < math.exp(min(0.0, log_alpha)):
            state.phi_h = prop
    phi = state.phi_h

    # sigma2_h | h, mu, phi with Gamma(1/2, rate 1/2) prior -> GIG(1/2 - T/2, chi, 1)
    dev = h - state.mu_h
    chi = (1.0 - phi * phi) * dev[0] ** 2
    if T > 1:
        chi += float(np.sum((dev[1:] - phi * dev[:-1]) ** 2))
    lam = 0.5 - 0.5 * T
    if chi == 0.0:
        chi = 1e-300
    state.sigma2_h = sample_gig(lam, chi, 1.0, rng)
    return state


def draw_sv_prior(T: int, rng: np.random.Generator) -> SvState:
    """Draw SV parameters from their priors and an h path from the implied AR(1)."""
    mu = rng.normal(0.0, math.sqrt(10.0))
    phi = 2.0 * rng.beta(25.0, 5.0) - 1.0
    sigma2 = rng.gamma(0.5, 2.0)
    h = np.empty(T)
    h[0] = rng.normal(mu, math.sqrt(sigma2 / (1.0 - phi * phi)))
    for t in range(1, T):
        h[t] = rng.normal(mu + phi * (h[t - 1] - mu), math.sqrt(sigma2))
    return SvState(h=h, mu_h=mu, phi_h=phi, sigma2_h=sigma2)
