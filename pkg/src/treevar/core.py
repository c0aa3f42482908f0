"""Core domain types: configuration, data containers, scaling, and the model log-likelihood.

Everything downstream (tree engine, volatility machinery, Gibbs sampler, structural
analysis) builds on the types in this module. The model is a VAR whose coefficients and
error-factor volatilities vary with user-supplied effect modifiers:

    y_t = (A + B_t) x_t + Gamma q_t + eps_t,

with x_t the (optionally intercept-augmented) lag vector, q_t ~ N(0, R(z_t)) latent
factors whose variances are driven by regression-tree ensembles over the modifiers z_t,
and eps_t ~ N(0, Sigma_t) idiosyncratic errors with stochastic log-variances.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TreevarError",
    "ConfigError",
    "DimensionError",
    "DegenerateScaleError",
    "IdentificationError",
    "IngestionError",
    "ModelConfig",
    "Dataset",
    "DesignData",
    "Scaler",
    "validate_config",
    "build_design",
    "fit_scaler",
    "log_likelihood_path",
]


class TreevarError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(TreevarError):
    """A configuration field violates its constraints; the message names the field."""


class DimensionError(TreevarError):
    """Arrays have inconsistent or insufficient dimensions."""


class DegenerateScaleError(TreevarError):
    """A series is constant and cannot be scaled to a range."""


class IdentificationError(TreevarError):
    """Shock identification is impossible (e.g. no flagged periods)."""


class IngestionError(TreevarError):
    """CSV ingestion failed: parse error, date misalignment, or missing values."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ModelConfig:
    """Estimation configuration.

    Parameters
    ----------
    P : int
        Lag order of the VAR.
    Q_beta : int
        Number of latent factors driving the time-varying coefficients. ``0``
        together with ``constant_coefficients=False`` leaves a pure white-noise
        coefficient deviation; ``constant_coefficients=True`` removes the
        time-varying block entirely (B_t = 0).
    Q_q : int
        Number of latent error factors (>= 1).
    S_beta, S_q : int
        Trees per coefficient factor / per variance factor.
    alpha, zeta : float
        Tree-prior base split probability and depth penalty: a node at depth d
        splits with probability ``alpha**nu * (1 + d) ** (-zeta**nu)``.
    kappa : float
        Terminal-node shrinkage; leaf values have prior variance 1/(2*kappa*S).
    n_min : int
        Minimum observations per terminal node for a split to be proposable.
    B_v : float
        Scale of the Gamma prior on coefficient process variances.
    include_intercept : bool
        Prepend a column of ones to the lag design (the intercept coefficient is
        time-varying like every other column).
    n_draws, n_burn, thin : int
        Total MCMC sweeps, discarded initial sweeps, thinning interval.
    seed : int
        RNG seed; identical seeds give bitwise-identical draws.
    constant_coefficients : bool
        Disable the time-varying-coefficient block (B_t = 0).
    """

    P: int = 1
    Q_beta: int = 2
    Q_q: int = 2
    S_beta: int = 20
    S_q: int = 20
    alpha: float = 0.95
    zeta: float = 2.0
    kappa: float = 2.0
    n_min: int = 5
    B_v: float = 0.01
    include_intercept: bool = True
    n_draws: int = 15000
    n_burn: int = 5000
    thin: int = 1
    seed: int = 0
    constant_coefficients: bool = False

    def replace(self, **changes) -> "ModelConfig":
        return replace(self, **changes)


def validate_config(config: ModelConfig) -> ModelConfig:
    """Check every ModelConfig invariant; return the config unchanged if valid.

    Raises
    ------
    ConfigError
        Naming the violated field.
    """
    c = config
    if not isinstance(c.P, (int, np.integer)) or c.P < 1:
        raise ConfigError("P must be an integer >= 1")
    if not (0.0 < c.alpha < 1.0):
        raise ConfigError("alpha must lie strictly between 0 and 1")
    if not (c.zeta > 1.0):
        raise ConfigError("zeta must be > 1")
    if c.Q_beta < 0:
        raise ConfigError("Q_beta must be >= 0")
    if c.Q_q < 1:
        raise ConfigError("Q_q must be >= 1")
    if c.S_beta < 1:
        raise ConfigError("S_beta must be >= 1")
    if c.S_q < 1:
        raise ConfigError("S_q must be >= 1")
    if not (c.B_v > 0):
        raise ConfigError("B_v must be > 0")
    if not (c.kappa > 0):
        raise ConfigError("kappa must be > 0")
    if not isinstance(c.n_min, (int, np.integer)) or c.n_min < 1:
        raise ConfigError("n_min must be an integer >= 1")
    if c.n_draws < 1:
        raise ConfigError("n_draws must be >= 1")
    if not (0 <= c.n_burn < c.n_draws):
        raise ConfigError("n_burn must satisfy 0 <= n_burn < n_draws")
    if c.thin < 1:
        raise ConfigError("thin must be >= 1")
    return c


# ---------------------------------------------------------------------------
# Data containers
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    """Aligned endogenous panel Y (T x M), effect modifiers Z (T x N), and labels.

    Rows of Y and Z share identical dates. Dates are opaque ordered labels; no
    calendar arithmetic happens here.
    """

    Y: np.ndarray
    Z: np.ndarray
    variable_names: Sequence[str]
    modifier_names: Sequence[str]
    dates: Sequence[str]

    def __post_init__(self):
        self.Y = np.asarray(self.Y, dtype=float)
        self.Z = np.asarray(self.Z, dtype=float)
        if self.Y.ndim != 2 or self.Z.ndim != 2:
            raise DimensionError("Y and Z must be two-dimensional")
        if self.Y.shape[0] != self.Z.shape[0]:
            raise DimensionError(
                f"Y has {self.Y.shape[0]} rows but Z has {self.Z.shape[0]}"
            )
        if len(self.dates) != self.Y.shape[0]:
            raise DimensionError("dates length must equal the number of rows")
        if len(self.variable_names) != self.Y.shape[1]:
            raise DimensionError("variable_names length must equal Y columns")
        if len(self.modifier_names) != self.Z.shape[1]:
            raise DimensionError("modifier_names length must equal Z columns")
        if not (np.all(np.isfinite(self.Y)) and np.all(np.isfinite(self.Z))):
            raise DimensionError("Y and Z must contain no missing/non-finite values")

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    @property
    def M(self) -> int:
        return self.Y.shape[1]

    @property
    def N(self) -> int:
        return self.Z.shape[1]


@dataclass
class DesignData:
    """Lagged design for the VAR: row t of X is (1?, y'_{t-1}, ..., y'_{t-P}).

    Construction consumes the first P rows of the raw panel; ``Y``, ``Z`` and
    ``dates`` here are the trimmed, usable rows aligned with ``X``.
    """

    X: np.ndarray
    K: int
    P: int
    include_intercept: bool
    Y: np.ndarray
    Z: np.ndarray
    dates: Sequence[str]

    @property
    def T(self) -> int:
        return self.X.shape[0]


def build_design(dataset: Dataset, P: int, include_intercept: bool) -> DesignData:
    """Assemble the lag design matrix from a Dataset.

    Parameters
    ----------
    dataset : Dataset
        Raw (transformed) panel with T rows.
    P : int
        Lag order; the first P rows are consumed by lagging.
    include_intercept : bool
        Prepend a column of ones, making K = M*P + 1.

    Returns
    -------
    DesignData
        With X of shape (T-P, K) and Y/Z/dates trimmed to the same rows.
    """
    if P < 1:
        raise DimensionError("P must be >= 1")
    T_raw, M = dataset.Y.shape
    if T_raw < P + 2:
        raise DimensionError(
            f"need at least P+2 = {P + 2} rows to build a lag-{P} design, got {T_raw}"
        )
    T = T_raw - P
    K = M * P + (1 if include_intercept else 0)
    X = np.empty((T, K))
    col = 0
    if include_intercept:
        X[:, 0] = 1.0
        col = 1
    for lag in range(1, P + 1):
        X[:, col : col + M] = dataset.Y[P - lag : T_raw - lag, :]
        col += M
    return DesignData(
        X=X,
        K=K,
        P=P,
        include_intercept=include_intercept,
        Y=dataset.Y[P:, :].copy(),
        Z=dataset.Z[P:, :].copy(),
        dates=list(dataset.dates[P:]),
    )


# ---------------------------------------------------------------------------
# Scaling
# ---------------------------------------------------------------------------


@dataclass
class Scaler:
    """Affine map taking a series' observed range onto [-0.5, 0.5], with exact inverse."""

    center: float
    half_range: float

    def forward(self, x):
        return (np.asarray(x, dtype=float) - self.center) / (2.0 * self.half_range)

    def inverse(self, u):
        return self.center + np.asarray(u, dtype=float) * (2.0 * self.half_range)

    @property
    def range(self) -> float:
        """Full observed range (the Jacobian of ``inverse``)."""
        return 2.0 * self.half_range


def fit_scaler(series) -> Scaler:
    """Fit a Scaler to a series so forward(min) = -0.5 and forward(max) = +0.5.

    Raises
    ------
    DegenerateScaleError
        If the series has fewer than 2 distinct values.
    """
    x = np.asarray(series, dtype=float)
    lo, hi = float(np.min(x)), float(np.max(x))
    if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
        raise DegenerateScaleError("series is constant (or non-finite); cannot scale")
    return Scaler(center=0.5 * (lo + hi), half_range=0.5 * (hi - lo))


# ---------------------------------------------------------------------------
# Model log-likelihood
# ---------------------------------------------------------------------------


def log_likelihood_path(
    Y: np.ndarray,
    X: np.ndarray,
    A: np.ndarray,
    Beta: Optional[np.ndarray],
    Gamma: np.ndarray,
    R: np.ndarray,
    sigma2: np.ndarray,
    subset: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Per-period Gaussian log-likelihood of the VAR with factor errors.

    Evaluates log N(y_t; (A + B_t) x_t, Gamma diag(R_t) Gamma' + diag(sigma2_t))
    for every t, optionally marginalized to a subset of variables (submatrix of
    the mean and covariance).

    Parameters
    ----------
    Y : (T, M) array
    X : (T, K) array
    A : (M, K) array
    Beta : (T, M, K) array or None
        Time-varying coefficient deviations B_t; None means B_t = 0.
    Gamma : (M, Q) array
    R : (T, Q) array of factor variances r_s(z_t).
    sigma2 : (T, M) array of idiosyncratic variances.
    subset : bool mask of length M, optional
        Marginalize the Gaussian to these variables.

    Returns
    -------
    (T,) array of log densities.
    """
    T, M = Y.shape
    if subset is None:
        idx = np.arange(M)
    else:
        subset = np.asarray(subset, dtype=bool)
        if subset.shape != (M,):
            raise DimensionError("subset mask must have length M")
        idx = np.flatnonzero(subset)
        if idx.size == 0:
            raise DimensionError("subset mask selects no variables")
    G = Gamma[idx, :]
    out = np.empty(T)
    log2pi = np.log(2.0 * np.pi)
    m = idx.size
    for t in range(T):
        coeff = A if Beta is None else A + Beta[t]
        mean = coeff[idx, :] @ X[t]
        resid = Y[t, idx] - mean
        cov = (G * R[t]) @ G.T
        cov[np.diag_indices(m)] += sigma2[t, idx]
        L = np.linalg.cholesky(cov)
        u = np.linalg.solve(L, resid)
        out[t] = -0.5 * (m * log2pi + u @ u) - np.sum(np.log(np.diag(L)))
    return out
