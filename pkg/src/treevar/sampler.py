"""Gibbs sampler for the tree-driven TVP-VAR with factor stochastic volatility.

One sweep runs twelve steps: per equation m, (1-2) tree structures and terminal
nodes of the coefficient-factor ensembles, targeted marginally of the
time-varying coefficients, (3) factor loadings Lambda_m, (4) the time-varying
coefficient path, (5) its process variances, (6) the constant coefficients,
(7) the error-factor loadings gamma_m, (8-9) horseshoe scales of the constant
coefficients and of Lambda_m, (10) idiosyncratic stochastic volatility; then
globally (11) the error factors q_t, the variance trees of the factor
volatilities, and (12) the horseshoe scales of Gamma. The ordering matters:
steps 1-3 condition on data with the time-varying coefficients integrated out,
so they must run before step 4 redraws those coefficients.

Equations are conditionally independent given (q, R) and run on deterministic
per-(sweep, equation) RNG substreams, so results are invariant to the number of
worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .core import (
    Dataset,
    DimensionError,
    ModelConfig,
    TreevarError,
    build_design,
    fit_scaler,
    log_likelihood_path,
    validate_config,
)
from .shrinkage import (
    HorseshoeBlock,
    draw_horseshoe_prior,
    sample_horseshoe,
    sample_process_variance,
)
from .trees import (
    Ensemble,
    TreePriorParams,
    WeightedTarget,
    bart_sweep,
    candidate_thresholds,
    sample_prior_ensemble,
)
from .volatility import (
    FactorVolState,
    SvState,
    draw_sv_prior,
    heterobart_sweep,
    sample_idio_sv,
)

__all__ = [
    "STEP_ORDER",
    "SamplerPlan",
    "EquationState",
    "ModelState",
    "PosteriorDraws",
    "init_state",
    "draw_state_from_prior",
    "simulate_observations",
    "step1_trees_marginal",
    "step3_loadings",
    "tvp_moments",
    "step4_tvp",
    "step5_process_vars",
    "step6_constant_coeffs",
    "step7_gamma",
    "step8_horseshoe_constant",
    "step9_horseshoe_loadings",
    "step10_idio_sv",
    "step11_factors",
    "update_variance_trees",
    "step12_horseshoe_gamma",
    "equation_sweep",
    "gibbs_sweep",
    "run_core_mcmc",
    "run_mcmc",
]

STEP_ORDER = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12)

# observations with |x'Lambda_q| below this carry no information about factor q
ZERO_INFO_EPS = 1e-10


# ---------------------------------------------------------------------------
# Plan and state containers
# ---------------------------------------------------------------------------


@dataclass
class SamplerPlan:
    """Sweep counts, seed, storage policy, and the fixed step order."""

    n_draws: int
    n_burn: int
    thin: int = 1
    seed: int = 0
    store_beta: bool = True
    store_trees: bool = True
    n_threads: int = 1
    steps: tuple = STEP_ORDER

    def __post_init__(self):
        if tuple(self.steps) != STEP_ORDER:
            raise TreevarError("the step order is fixed; reordering is not supported")
        if not (0 <= self.n_burn < self.n_draws):
            raise TreevarError("need 0 <= n_burn < n_draws")
        if self.thin < 1:
            raise TreevarError("thin must be >= 1")
        if self.n_threads < 1:
            raise TreevarError("n_threads must be >= 1")

    @classmethod
    def from_config(cls, config: ModelConfig, **overrides) -> "SamplerPlan":
        kwargs = dict(
            n_draws=config.n_draws, n_burn=config.n_burn, thin=config.thin,
            seed=config.seed,
        )
        kwargs.update(overrides)
        return cls(**kwargs)

    @property
    def n_retained(self) -> int:
        return (self.n_draws - self.n_burn) // self.thin

    def retained(self, sweep: int) -> bool:
        """Whether 1-based sweep index ``sweep`` is stored."""
        return sweep > self.n_burn and (sweep - self.n_burn) % self.thin == 0

    def rng(self, sweep: int, stream: int) -> np.random.Generator:
        """Deterministic substream for (sweep, logical stream id)."""
        return np.random.default_rng(np.random.SeedSequence((self.seed, sweep, stream)))


@dataclass
class EquationState:
    """All blocks owned by one VAR equation."""

    a: np.ndarray                      # (K,) constant coefficients
    beta: np.ndarray                   # (T, K) time-varying deviations
    Lambda: np.ndarray                 # (K, Q_beta) loadings on coefficient factors
    V: np.ndarray                      # (K,) process variances
    ensembles: List[Ensemble]          # Q_beta coefficient-factor ensembles
    sv: SvState                        # idiosyncratic stochastic volatility
    hs_a: HorseshoeBlock               # horseshoe block of a (size K)
    hs_lambda: List[HorseshoeBlock]    # one block per column of Lambda (size K each)

    def factor_values(self) -> np.ndarray:
        """F_m(z_t) for all t: (T, Q_beta) matrix of ensemble fits."""
        if not self.ensembles:
            return np.zeros((self.beta.shape[0], 0))
        return np.column_stack([e.fit_total() for e in self.ensembles])

    def prior_mean_path(self) -> np.ndarray:
        """Lambda_m F_m(z_t) for all t: the (T, K) prior mean of beta."""
        if not self.ensembles:
            return np.zeros_like(self.beta)
        return self.factor_values() @ self.Lambda.T


@dataclass
class ModelState:
    """Complete parameter-and-latent state of the sampler."""

    equations: List[EquationState]
    Gamma: np.ndarray                  # (M, Q_q)
    q: np.ndarray                      # (T, Q_q) error factors
    factor_vols: List[FactorVolState]  # one per error factor
    hs_gamma: List[HorseshoeBlock]     # one block per column of Gamma (size M each)
    tree_prior_beta: Optional[TreePriorParams]
    tree_prior_q: TreePriorParams

    @property
    def M(self) -> int:
        return len(self.equations)

    @property
    def A(self) -> np.ndarray:
        return np.vstack([eq.a for eq in self.equations])

    @property
    def Beta(self) -> np.ndarray:
        """(T, M, K) stack of time-varying deviations."""
        return np.stack([eq.beta for eq in self.equations], axis=1)

    @property
    def Lambda_stack(self) -> np.ndarray:
        return np.stack([eq.Lambda for eq in self.equations], axis=0)

    @property
    def V_stack(self) -> np.ndarray:
        return np.vstack([eq.V for eq in self.equations])

    @property
    def sigma2(self) -> np.ndarray:
        """(T, M) idiosyncratic variances exp(h_mt)."""
        return np.column_stack([eq.sv.variances() for eq in self.equations])

    @property
    def h_idio(self) -> np.ndarray:
        return np.column_stack([eq.sv.h for eq in self.equations])

    @property
    def R(self) -> np.ndarray:
        """(T, Q_q) factor variances r_s(z_t) from the variance trees."""
        cols = [np.exp(np.clip(v.ensemble.fit_total(), -700.0, 700.0))
                for v in self.factor_vols]
        return np.column_stack(cols)

    def sv_params(self) -> np.ndarray:
        return np.array([[eq.sv.mu_h, eq.sv.phi_h, eq.sv.sigma2_h]
                         for eq in self.equations])


def make_tree_prior(Z: np.ndarray, nu: int, S: int, config: ModelConfig) -> TreePriorParams:
    """Tree-prior parameters for an ensemble of S trees over modifiers Z."""
    return TreePriorParams(
        nu=nu, alpha=config.alpha, zeta=config.zeta,
        prior_var=1.0 / (2.0 * config.kappa * S), n_min=config.n_min,
        thresholds=candidate_thresholds(Z),
    )


# ---------------------------------------------------------------------------
# Initialization and generative draws
# ---------------------------------------------------------------------------


def init_state(
    Y: np.ndarray, X: np.ndarray, Z: np.ndarray, config: ModelConfig,
    rng: np.random.Generator,
) -> ModelState:
    """Dispersed but numerically safe starting state.

    Constant coefficients at unit-prior-variance ridge estimates; trees at
    root-only with zero leaves; loadings ~ N(0, 0.01); process variances 0.01;
    factors at zero; log-variances at the log residual variances of the ridge
    fit; all horseshoe scales at one.
    """
    T, M = Y.shape
    K = X.shape[1]
    n_factors = 0 if config.constant_coefficients else config.Q_beta
    prior_b = make_tree_prior(Z, 2, config.S_beta, config) if n_factors else None
    prior_q = make_tree_prior(Z, 1, config.S_q, config)

    XtX = X.T @ X + np.eye(K)
    equations = []
    for m in range(M):
        a = np.linalg.solve(XtX, X.T @ Y[:, m])
        resid = Y[:, m] - X @ a
        s2 = max(float(np.var(resid)), 1e-8)
        ensembles = [Ensemble.root_only(config.S_beta, nu=2, prior_var=prior_b.prior_var)
                     for _ in range(n_factors)]
        for e in ensembles:
            e.refresh_fits(Z)
        equations.append(EquationState(
            a=a,
            beta=np.zeros((T, K)),
            Lambda=rng.normal(0.0, 0.1, (K, n_factors)),
            V=np.full(K, 0.01),
            ensembles=ensembles,
            sv=SvState(h=np.full(T, math.log(s2)), mu_h=math.log(s2),
                       phi_h=0.9, sigma2_h=0.1),
            hs_a=HorseshoeBlock.ones(K),
            hs_lambda=[HorseshoeBlock.ones(K) for _ in range(n_factors)],
        ))
    factor_vols = [
        FactorVolState(
            ensemble=_root_ensemble(config.S_q, 1, prior_q.prior_var, Z),
            prior=prior_q,
        )
        for _ in range(config.Q_q)
    ]
    return ModelState(
        equations=equations,
        Gamma=rng.normal(0.0, 0.1, (M, config.Q_q)),
        q=np.zeros((T, config.Q_q)),
        factor_vols=factor_vols,
        hs_gamma=[HorseshoeBlock.ones(M) for _ in range(config.Q_q)],
        tree_prior_beta=prior_b,
        tree_prior_q=prior_q,
    )


def _root_ensemble(S, nu, prior_var, Z):
    e = Ensemble.root_only(S, nu=nu, prior_var=prior_var)
    e.refresh_fits(Z)
    return e


def draw_state_from_prior(
    X: np.ndarray, Z: np.ndarray, M: int, config: ModelConfig,
    rng: np.random.Generator,
) -> ModelState:
    """Draw every parameter and latent block from the model's generative prior.

    Used by the joint-distribution correctness test: tree structures from the
    validity-conditioned prior, leaves N(0, prior_var), coefficient blocks from
    horseshoe-conditional normals, process variances from Gamma(1/2, 4 B_v),
    volatility states from their AR(1) priors, factors from N(0, R_t).
    """
    T = X.shape[0]
    K = X.shape[1]
    n_factors = 0 if config.constant_coefficients else config.Q_beta
    prior_b = make_tree_prior(Z, 2, config.S_beta, config) if n_factors else None
    prior_q = make_tree_prior(Z, 1, config.S_q, config)

    hs_gamma = [draw_horseshoe_prior(M, rng) for _ in range(config.Q_q)]
    Gamma = np.column_stack([
        rng.normal(0.0, np.sqrt(b.prior_variances())) for b in hs_gamma
    ]) if config.Q_q else np.zeros((M, 0))

    factor_vols = [
        FactorVolState(ensemble=sample_prior_ensemble(config.S_q, Z, prior_q, rng),
                       prior=prior_q)
        for _ in range(config.Q_q)
    ]
    R = np.column_stack([np.exp(np.clip(v.ensemble.fit_total(), -700, 700))
                         for v in factor_vols])
    q = rng.normal(0.0, np.sqrt(R))

    equations = []
    for m in range(M):
        hs_a = draw_horseshoe_prior(K, rng)
        a = rng.normal(0.0, np.sqrt(hs_a.prior_variances()))
        hs_lambda = [draw_horseshoe_prior(K, rng) for _ in range(n_factors)]
        Lambda = (np.column_stack([
            rng.normal(0.0, np.sqrt(b.prior_variances())) for b in hs_lambda
        ]) if n_factors else np.zeros((K, 0)))
        ensembles = [sample_prior_ensemble(config.S_beta, Z, prior_b, rng)
                     for _ in range(n_factors)]
        V = rng.gamma(0.5, 4.0 * config.B_v, size=K)
        sv = draw_sv_prior(T, rng)
        eq = EquationState(a=a, beta=np.zeros((T, K)), Lambda=Lambda, V=V,
                           ensembles=ensembles, sv=sv, hs_a=hs_a, hs_lambda=hs_lambda)
        if not config.constant_coefficients:
            eq.beta = eq.prior_mean_path() + rng.normal(0.0, np.sqrt(V), (T, K))
        equations.append(eq)
    return ModelState(equations=equations, Gamma=Gamma, q=q,
                      factor_vols=factor_vols, hs_gamma=hs_gamma,
                      tree_prior_beta=prior_b, tree_prior_q=prior_q)


def simulate_observations(
    state: ModelState, X: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Draw Y from the observation equation given the full latent state."""
    T = X.shape[0]
    M = state.M
    Y = np.empty((T, M))
    for m, eq in enumerate(state.equations):
        mean = X @ eq.a + np.sum(X * eq.beta, axis=1) + state.q @ state.Gamma[m]
        Y[:, m] = mean + rng.normal(0.0, np.sqrt(eq.sv.variances()))
    return Y


# ---------------------------------------------------------------------------
# Per-equation steps (1-10)
# ---------------------------------------------------------------------------


def _ystar(state: ModelState, m: int, Y: np.ndarray, X: np.ndarray) -> np.ndarray:
    """y - x'a - q'gamma: the response with constant and factor parts removed."""
    eq = state.equations[m]
    return Y[:, m] - X @ eq.a - state.q @ state.Gamma[m]


def step1_trees_marginal(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> tuple:
    """Update equation m's coefficient-factor trees, marginally of the TVPs.

    Integrating the time-varying deviations out of y = x'(a + beta) + q'gamma + eps
    leaves ystar_t = sum_j (x_t'Lambda[:,j]) g_j(z_t) + noise with variance
    x_t'V x_t + sigma2_t. For each factor j, the other factors' fits are moved to
    the left side and the equation is divided by xtilde_j = x'Lambda[:,j], giving a
    weighted BART target; rows with |xtilde_j| < 1e-10 carry no information and are
    excluded. If every row is excluded the ensemble is drawn from its prior.

    Returns (accepted, proposed) MH counts.
    """
    eq = state.equations[m]
    if not eq.ensembles:
        return (0, 0)
    ystar = _ystar(state, m, Y, X)
    noise = np.einsum("tk,k,tk->t", X, eq.V, X) + eq.sv.variances()
    acc = prop = 0
    for j, ensemble in enumerate(eq.ensembles):
        xt = X @ eq.Lambda[:, j]
        rows = np.flatnonzero(np.abs(xt) >= ZERO_INFO_EPS)
        if rows.size == 0:
            eq.ensembles[j] = sample_prior_ensemble(config.S_beta, Z,
                                                    state.tree_prior_beta, rng)
            continue
        others = np.zeros(X.shape[0])
        for k, other in enumerate(eq.ensembles):
            if k != j:
                others += (X @ eq.Lambda[:, k]) * other.fit_total()
        u = (ystar - others)[rows] / xt[rows]
        w = noise[rows] / xt[rows] ** 2
        target = WeightedTarget(u, w, rows=rows)
        a, p = bart_sweep(ensemble, target, Z, rng, state.tree_prior_beta)
        acc += a
        prop += p
    return (acc, prop)


def step3_loadings(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Draw vec(Lambda_m) from its Gaussian conditional, marginally of the TVPs.

    Regression of ystar on (F_m(z_t)' kron x_t') with noise variance
    x'Vx + sigma2_t and horseshoe prior variances on the coefficients
    (one global per column of Lambda_m).
    """
    eq = state.equations[m]
    if not eq.ensembles:
        return
    F = eq.factor_values()                    # (T, Qb)
    W = np.einsum("tq,tk->tqk", F, X).reshape(X.shape[0], -1)
    omega = np.einsum("tk,k,tk->t", X, eq.V, X) + eq.sv.variances()
    prior_var = np.concatenate([b.prior_variances() for b in eq.hs_lambda])
    vec = _gaussian_regression_draw(W, _ystar(state, m, Y, X), omega, prior_var, rng)
    eq.Lambda = vec.reshape(len(eq.ensembles), -1).T


def _gaussian_regression_draw(W, y, noise_var, prior_var, rng, prior_mean=None):
    """Draw coef ~ N(mean, Var) for y = W coef + N(0, diag(noise_var)) with
    independent N(prior_mean, prior_var) priors. Returns the draw."""
    Ww = W / noise_var[:, None]
    prec = W.T @ Ww + np.diag(1.0 / prior_var)
    b = Ww.T @ y
    if prior_mean is not None:
        b = b + prior_mean / prior_var
    L = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, b)
    z = rng.standard_normal(prec.shape[0])
    return mean + solve_triangular(L.T, z, lower=False)


def tvp_moments(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray
) -> tuple:
    """Posterior mean (T, K) and covariance (T, K, K) of equation m's TVP path.

    Each period contributes precision x_t x_t'/sigma2_t + diag(1/V) and prior
    mean Lambda_m F_m(z_t); the joint posterior over the stacked path is
    block-diagonal in t, so the per-period blocks are the complete answer.
    """
    eq = state.equations[m]
    K = eq.beta.shape[1]
    sigma2 = eq.sv.variances()
    ystar = _ystar(state, m, Y, X)
    prior_mean = eq.prior_mean_path()         # (T, K)
    Vinv = 1.0 / eq.V
    P = X[:, :, None] * X[:, None, :] / sigma2[:, None, None]
    P[:, np.arange(K), np.arange(K)] += Vinv[None, :]
    rhs = X * (ystar / sigma2)[:, None] + prior_mean * Vinv[None, :]
    mean = np.linalg.solve(P, rhs[:, :, None])[:, :, 0]
    cov = np.linalg.inv(P)
    return mean, cov


def step4_tvp(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Draw equation m's full TVP path from its per-period Gaussian conditionals.

    The joint posterior over the stacked path is block-diagonal in t (see
    ``tvp_moments``), so the T blocks are drawn independently (batched linalg).
    """
    eq = state.equations[m]
    if config.constant_coefficients:
        return
    T, K = eq.beta.shape
    mean, cov = tvp_moments(state, m, Y, X)
    Lc = np.linalg.cholesky(cov)
    eq.beta = mean + np.einsum("tij,tj->ti", Lc, rng.standard_normal((T, K)))


def step5_process_vars(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Draw each process variance v2_mj from its GIG conditional, using the
    innovations eta_mj,t = beta_mj,t - [Lambda_m F_m(z_t)]_j."""
    eq = state.equations[m]
    if config.constant_coefficients:
        return
    eta = eq.beta - eq.prior_mean_path()
    for j in range(eta.shape[1]):
        eq.V[j] = sample_process_variance(eta[:, j], config.B_v, rng)


def step6_constant_coeffs(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Draw a_m from its Gaussian conditional given beta, gamma, and sigma2."""
    eq = state.equations[m]
    resp = Y[:, m] - np.sum(X * eq.beta, axis=1) - state.q @ state.Gamma[m]
    eq.a = _gaussian_regression_draw(X, resp, eq.sv.variances(),
                                     eq.hs_a.prior_variances(), rng)


def step7_gamma(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Draw gamma_m (loadings on the error factors) from its Gaussian conditional.

    Response y - x'(a + beta), regressors q_t, noise sigma2_mt; horseshoe prior
    variances come column-wise from Gamma's blocks.
    """
    eq = state.equations[m]
    resp = Y[:, m] - X @ eq.a - np.sum(X * eq.beta, axis=1)
    prior_var = np.array([
        b.local2[m] * b.global2 for b in state.hs_gamma
    ])
    state.Gamma[m] = _gaussian_regression_draw(state.q, resp, eq.sv.variances(),
                                               prior_var, rng)


def step8_horseshoe_constant(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Resample the horseshoe block of a_m."""
    eq = state.equations[m]
    sample_horseshoe(eq.hs_a, eq.a, rng)


def step9_horseshoe_loadings(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Resample the horseshoe blocks of Lambda_m, one global per column."""
    eq = state.equations[m]
    for j, block in enumerate(eq.hs_lambda):
        sample_horseshoe(block, eq.Lambda[:, j], rng)


def step10_idio_sv(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator,
) -> None:
    """Update equation m's stochastic-volatility block from its residuals."""
    eq = state.equations[m]
    resid = (Y[:, m] - X @ eq.a - np.sum(X * eq.beta, axis=1)
             - state.q @ state.Gamma[m])
    sample_idio_sv(resid, eq.sv, rng)


# ---------------------------------------------------------------------------
# Global steps (11, variance trees, 12)
# ---------------------------------------------------------------------------


def step11_factors(
    state: ModelState, Y: np.ndarray, X: np.ndarray, rng: np.random.Generator
) -> None:
    """Draw the error factors q_t, independently per period.

    q_t ~ N(Vbar Gamma' Sigma_t^{-1} yhat_t, Vbar) with
    Vbar = (Gamma' Sigma_t^{-1} Gamma + R_t^{-1})^{-1} and yhat the VAR residual
    y_t - (A + B_t) x_t.
    """
    T = Y.shape[0]
    A = state.A
    U = Y - X @ A.T
    for m, eq in enumerate(state.equations):
        U[:, m] -= np.sum(X * eq.beta, axis=1)
    sigma2 = state.sigma2                      # (T, M)
    R = state.R                                # (T, Q)
    G = state.Gamma                            # (M, Q)
    Q = G.shape[1]
    Gw = G[None, :, :] / sigma2[:, :, None]    # (T, M, Q)
    P = np.einsum("mq,tmr->tqr", G, Gw)
    P[:, np.arange(Q), np.arange(Q)] += 1.0 / R
    b = np.einsum("tmq,tm->tq", Gw, U)
    mean = np.linalg.solve(P, b[:, :, None])[:, :, 0]
    Lc = np.linalg.cholesky(np.linalg.inv(P))
    state.q = mean + np.einsum("tij,tj->ti", Lc, rng.standard_normal((T, Q)))


def update_variance_trees(
    state: ModelState, Z: np.ndarray, rng: np.random.Generator
) -> tuple:
    """Run one heteroskedastic-BART sweep per error factor; returns MH counts."""
    acc = prop = 0
    for s, vol in enumerate(state.factor_vols):
        heterobart_sweep(vol, state.q[:, s], Z, rng)
        acc += vol.last_counts[0]
        prop += vol.last_counts[1]
    return (acc, prop)


def step12_horseshoe_gamma(state: ModelState, rng: np.random.Generator) -> None:
    """Resample Gamma's horseshoe blocks, one global per column."""
    for j, block in enumerate(state.hs_gamma):
        sample_horseshoe(block, state.Gamma[:, j], rng)


# ---------------------------------------------------------------------------
# Sweep orchestration
# ---------------------------------------------------------------------------

_EQ_STEPS = (
    (1, step1_trees_marginal),
    (3, step3_loadings),
    (4, step4_tvp),
    (5, step5_process_vars),
    (6, step6_constant_coeffs),
    (7, step7_gamma),
    (8, step8_horseshoe_constant),
    (9, step9_horseshoe_loadings),
    (10, step10_idio_sv),
)


def equation_sweep(
    state: ModelState, m: int, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, rng: np.random.Generator, trace: Optional[list] = None,
) -> tuple:
    """Steps 1-10 for one equation, in order. Returns tree MH counts."""
    acc = prop = 0
    for label, fn in _EQ_STEPS:
        out = fn(state, m, Y, X, Z, config, rng)
        if label == 1 and out is not None:
            acc, prop = out
        if trace is not None:
            trace.append((m, label))
    return (acc, prop)


def gibbs_sweep(
    state: ModelState, Y: np.ndarray, X: np.ndarray, Z: np.ndarray,
    config: ModelConfig, plan: SamplerPlan, sweep: int,
    trace: Optional[list] = None,
) -> dict:
    """One full sweep: steps 1-10 per equation, then 11, variance trees, 12.

    Per-equation work runs on substream (seed, sweep, m); the global block runs
    on substream (seed, sweep, M). Returns MH diagnostics for the sweep.
    """
    M = state.M
    counts = {"mean_accepted": 0, "mean_proposed": 0,
              "var_accepted": 0, "var_proposed": 0}

    def run_equation(m):
        rng = plan.rng(sweep, m)
        eq_trace = [] if trace is not None else None
        out = equation_sweep(state, m, Y, X, Z, config, rng, eq_trace)
        return m, out, eq_trace

    if plan.n_threads > 1 and M > 1:
        with ThreadPoolExecutor(max_workers=plan.n_threads) as pool:
            results = list(pool.map(run_equation, range(M)))
    else:
        results = [run_equation(m) for m in range(M)]
    for m, (acc, prop), eq_trace in sorted(results):
        counts["mean_accepted"] += acc
        counts["mean_proposed"] += prop
        if trace is not None:
            trace.extend(eq_trace)

    rng = plan.rng(sweep, M)
    step11_factors(state, Y, X, rng)
    if trace is not None:
        trace.append((-1, 11))
    va, vp = update_variance_trees(state, Z, rng)
    counts["var_accepted"] += va
    counts["var_proposed"] += vp
    if trace is not None:
        trace.append((-1, 11.5))
    step12_horseshoe_gamma(state, rng)
    if trace is not None:
        trace.append((-1, 12))
    return counts


# ---------------------------------------------------------------------------
# Draw container and full runs
# ---------------------------------------------------------------------------


@dataclass
class PosteriorDraws:
    """Retained draws, per-period log-likelihoods, and diagnostics.

    Arrays are indexed draw-first. ``Beta`` and the tree snapshots may be None
    when the plan's storage policy excludes them. When produced by ``run_mcmc``,
    draws are in the model's internal [-0.5, 0.5] scale and ``scalers`` holds the
    per-variable affine maps back to raw units (``loglik`` is already in raw
    units); core runs leave ``scalers`` None and work in the units given.
    """

    config: ModelConfig
    A: np.ndarray                       # (D, M, K)
    Gamma: np.ndarray                   # (D, M, Q_q)
    V: np.ndarray                       # (D, M, K)
    Lambda: np.ndarray                  # (D, M, K, Q_beta)
    q: np.ndarray                       # (D, T, Q_q)
    R: np.ndarray                       # (D, T, Q_q)
    sigma2: np.ndarray                  # (D, T, M)
    sv_params: np.ndarray               # (D, M, 3) rows (mu_h, phi_h, sigma2_h)
    loglik: np.ndarray                  # (D, T)
    Beta: Optional[np.ndarray] = None   # (D, T, M, K)
    mean_trees: Optional[list] = None   # per draw: M x Q_beta ensemble JSON objects
    var_trees: Optional[list] = None    # per draw: Q_q ensemble JSON objects
    tree_accept: dict = field(default_factory=dict)
    scalers: Optional[list] = None      # per-variable Scaler (run_mcmc only)
    variable_names: Optional[list] = None
    modifier_names: Optional[list] = None
    dates: Optional[np.ndarray] = None
    Z: Optional[np.ndarray] = None
    Y: Optional[np.ndarray] = None      # training Y in model scale (trimmed)
    X: Optional[np.ndarray] = None      # training design in model scale

    @property
    def n_retained(self) -> int:
        return self.A.shape[0]

    @property
    def T(self) -> int:
        return self.loglik.shape[1]


def run_core_mcmc(
    Y: np.ndarray, X: np.ndarray, Z: np.ndarray, config: ModelConfig,
    plan: Optional[SamplerPlan] = None, progress: bool = False,
) -> PosteriorDraws:
    """Run the full Gibbs sampler on prepared (Y, X, Z), in the units given.

    Deterministic given (config, plan): per-(sweep, equation) RNG substreams make
    the output invariant to thread count. Numerical failure in any step aborts
    with (sweep, equation, step) context.
    """
    validate_config(config)
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Y.shape[0] != X.shape[0] or Y.shape[0] != Z.shape[0]:
        raise DimensionError("Y, X, Z must share their first (time) dimension")
    if plan is None:
        plan = SamplerPlan.from_config(config)
    T, M = Y.shape
    K = X.shape[1]
    state = init_state(Y, X, Z, config, plan.rng(0, M + 1))

    D = plan.n_retained
    n_factors = 0 if config.constant_coefficients else config.Q_beta
    out = PosteriorDraws(
        config=config,
        A=np.empty((D, M, K)),
        Gamma=np.empty((D, M, config.Q_q)),
        V=np.empty((D, M, K)),
        Lambda=np.empty((D, M, K, n_factors)),
        q=np.empty((D, T, config.Q_q)),
        R=np.empty((D, T, config.Q_q)),
        sigma2=np.empty((D, T, M)),
        sv_params=np.empty((D, M, 3)),
        loglik=np.empty((D, T)),
        Beta=np.empty((D, T, M, K)) if plan.store_beta else None,
        mean_trees=[] if plan.store_trees else None,
        var_trees=[] if plan.store_trees else None,
    )
    counts = {"mean_accepted": 0, "mean_proposed": 0,
              "var_accepted": 0, "var_proposed": 0}
    d = 0
    for sweep in range(1, plan.n_draws + 1):
        try:
            sweep_counts = gibbs_sweep(state, Y, X, Z, config, plan, sweep)
        except TreevarError:
            raise
        except Exception as exc:  # noqa: BLE001 - re-raise with sweep context
            raise TreevarError(f"sweep {sweep}: {exc}") from exc
        for k in counts:
            counts[k] += sweep_counts[k]
        if plan.retained(sweep):
            _store_draw(out, d, state, Y, X, config, plan)
            d += 1
        if progress and sweep % max(1, plan.n_draws // 20) == 0:
            print(f"sweep {sweep}/{plan.n_draws}", flush=True)
    out.tree_accept = {
        "mean": (counts["mean_accepted"], counts["mean_proposed"]),
        "var": (counts["var_accepted"], counts["var_proposed"]),
    }
    out.Y = Y
    out.X = X
    out.Z = Z
    return out


def _store_draw(out, d, state, Y, X, config, plan):
    out.A[d] = state.A
    out.Gamma[d] = state.Gamma
    out.V[d] = state.V_stack
    out.Lambda[d] = state.Lambda_stack
    out.q[d] = state.q
    out.R[d] = state.R
    out.sigma2[d] = state.sigma2
    out.sv_params[d] = state.sv_params()
    Beta = None if config.constant_coefficients else state.Beta
    if out.Beta is not None:
        out.Beta[d] = 0.0 if Beta is None else Beta
    out.loglik[d] = log_likelihood_path(Y, X, state.A, Beta, state.Gamma,
                                        state.R, state.sigma2)
    if out.mean_trees is not None:
        out.mean_trees.append([[e.to_json_obj() for e in eq.ensembles]
                               for eq in state.equations])
        out.var_trees.append([v.ensemble.to_json_obj() for v in state.factor_vols])


def run_mcmc(
    config: ModelConfig, dataset: Dataset, plan: Optional[SamplerPlan] = None,
    progress: bool = False,
) -> PosteriorDraws:
    """Estimate the model on a Dataset: scale, build the lag design, sample.

    Each endogenous series is affinely mapped onto [-0.5, 0.5] before
    estimation; draws stay in that scale (see PosteriorDraws.scalers) while the
    stored log-likelihoods are corrected back to raw units by the Jacobian
    -sum_m log(range_m).
    """
    validate_config(config)
    scalers = [fit_scaler(dataset.Y[:, m]) for m in range(dataset.M)]
    Y_scaled = np.column_stack([s.forward(dataset.Y[:, m])
                                for m, s in enumerate(scalers)])
    scaled = Dataset(Y=Y_scaled, Z=dataset.Z,
                     variable_names=dataset.variable_names,
                     modifier_names=dataset.modifier_names, dates=dataset.dates)
    design = build_design(scaled, config.P, config.include_intercept)
    if design.T <= design.K:
        raise DimensionError(
            f"need more observations than design columns (T={design.T}, K={design.K})")
    draws = run_core_mcmc(design.Y, design.X, design.Z, config,
                          plan=plan, progress=progress)
    draws.loglik -= float(np.sum([math.log(s.range) for s in scalers]))
    draws.scalers = scalers
    draws.variable_names = list(dataset.variable_names)
    draws.modifier_names = list(dataset.modifier_names)
    draws.dates = design.dates
    return draws
