"""Forward simulation of the full data-generating process, for tests and demos.

Generates y_t = (A + B_t) x_t + Gamma q_t + eps_t sequentially from supplied
coefficient, loading, and variance laws, where x_t stacks an optional intercept
and P lags, q_t ~ N(0, diag(R_t)), and eps_t ~ N(0, diag(sigma2_t)). Laws may be
constants, precomputed paths, or callables of the modifier matrix Z (which is
how tree-driven truths are expressed).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .core import Dataset, DimensionError, TreevarError
from .analysis import companion_matrix

__all__ = ["DgpSpec", "GroundTruth", "simulate_dgp"]

Law = Union[None, float, np.ndarray, Callable[[np.ndarray], np.ndarray]]


@dataclass
class DgpSpec:
    """Ground-truth specification of a simulated panel.

    Laws accept: None (inactive/unit default), a constant, a full path array,
    or a callable of Z returning the path — e.g. a step function of one
    modifier column for regime-switching truths.

    Fields
    ------
    M, P, T : dimensions (T excludes the P presample rows used for lags).
    A : (M, K) constant coefficients, K = intercept + M*P columns.
    Gamma : (M, Q) error-factor loadings.
    beta_law : law for the (T, M, K) time-varying deviations B_t.
    r_law : law for the (T, Q) factor variances r_s(z_t); default all ones.
    sigma2_law : law for the (T, M) idiosyncratic variances; default 0.01.
    Z : (T, N) modifiers, or None to draw uniform(0, 1) with n_modifiers columns.
    include_intercept : whether A's first column is an intercept.
    y_init : (P, M) presample values; zeros by default.
    explosive_ok : allow companion spectral radius > 1 at some period.
    n_modifiers : columns of Z when Z is generated internally.
    """

    M: int
    P: int
    T: int
    A: np.ndarray
    Gamma: np.ndarray
    beta_law: Law = None
    r_law: Law = None
    sigma2_law: Law = 0.01
    Z: Optional[np.ndarray] = None
    include_intercept: bool = True
    y_init: Optional[np.ndarray] = None
    explosive_ok: bool = False
    n_modifiers: int = 2

    @property
    def K(self) -> int:
        return int(self.include_intercept) + self.M * self.P

    @property
    def Q(self) -> int:
        return np.asarray(self.Gamma).shape[1]


@dataclass
class GroundTruth:
    """The realized latent paths behind a simulated Dataset."""

    A: np.ndarray          # (M, K)
    Beta: np.ndarray       # (T, M, K)
    Gamma: np.ndarray      # (M, Q)
    R: np.ndarray          # (T, Q)
    sigma2: np.ndarray     # (T, M)
    q: np.ndarray          # (T, Q)
    Z: np.ndarray          # (T, N)


def _materialize(law: Law, Z: np.ndarray, shape: tuple, default: float) -> np.ndarray:
    if law is None:
        out = np.full(shape, default)
    elif callable(law):
        out = np.asarray(law(Z), dtype=float)
    else:
        out = np.broadcast_to(np.asarray(law, dtype=float), shape).copy()
    if out.shape != shape:
        raise DimensionError(f"law produced shape {out.shape}, expected {shape}")
    return out


def simulate_dgp(spec: DgpSpec, seed: int = 0):
    """Simulate one panel; returns (Dataset, GroundTruth).

    Deterministic given (spec, seed). Raises unless every period's companion
    matrix of A + B_t has spectral radius <= 1 + 1e-9, or explosive_ok is set.
    """
    rng = np.random.default_rng(seed)
    M, P, T, K = spec.M, spec.P, spec.T, spec.K
    A = np.asarray(spec.A, dtype=float)
    Gamma = np.asarray(spec.Gamma, dtype=float)
    if A.shape != (M, K):
        raise DimensionError(f"A must be (M, K) = ({M}, {K}); got {A.shape}")
    if Gamma.shape[0] != M:
        raise DimensionError("Gamma must have M rows")
    Q = Gamma.shape[1]

    Z = (np.asarray(spec.Z, dtype=float) if spec.Z is not None
         else rng.uniform(0.0, 1.0, (T, spec.n_modifiers)))
    if Z.shape[0] != T:
        raise DimensionError("Z must have T rows")

    Beta = _materialize(spec.beta_law, Z, (T, M, K), 0.0)
    R = _materialize(spec.r_law, Z, (T, Q), 1.0)
    sigma2 = _materialize(spec.sigma2_law, Z, (T, M), 0.01)
    if np.any(R <= 0) or np.any(sigma2 <= 0):
        raise TreevarError("variance laws must be strictly positive")

    if not spec.explosive_ok:
        for t in range(T):
            C = companion_matrix(A + Beta[t], P, spec.include_intercept)
            if np.max(np.abs(np.linalg.eigvals(C))) > 1.0 + 1e-9:
                raise TreevarError(
                    f"explosive coefficient draw at period {t}; "
                    "set explosive_ok=True to simulate anyway")

    q = rng.normal(0.0, np.sqrt(R))
    eps = rng.normal(0.0, np.sqrt(sigma2))
    y_init = (np.zeros((P, M)) if spec.y_init is None
              else np.asarray(spec.y_init, dtype=float))
    if y_init.shape != (P, M):
        raise DimensionError("y_init must be (P, M)")

    lags = list(y_init[::-1])          # lags[0] = y_{t-1}, ..., lags[P-1] = y_{t-P}
    Y = np.empty((T, M))
    for t in range(T):
        parts = ([np.ones(1)] if spec.include_intercept else [])
        x = np.concatenate(parts + [lags[p] for p in range(P)])
        Y[t] = (A + Beta[t]) @ x + Gamma @ q[t] + eps[t]
        lags = [Y[t]] + lags[:-1]

    dates = [f"t{t:04d}" for t in range(T)]
    dataset = Dataset(
        Y=Y, Z=Z,
        variable_names=[f"y{m}" for m in range(M)],
        modifier_names=[f"z{n}" for n in range(Z.shape[1])],
        dates=dates,
    )
    truth = GroundTruth(A=A, Beta=Beta, Gamma=Gamma, R=R, sigma2=sigma2, q=q, Z=Z)
    return dataset, truth
