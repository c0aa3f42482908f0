"""Shared helpers for the test suite."""

import numpy as np
import pytest

from treevar import Dataset, ModelConfig


def batch_means_se(x, n_batches=40):
    """Batch-means standard error of the mean of a (possibly autocorrelated) chain."""
    x = np.asarray(x, dtype=float)
    n = x.size // n_batches
    if n < 1:
        raise ValueError("chain too short for the requested batch count")
    means = x[: n * n_batches].reshape(n_batches, n).mean(axis=1)
    return float(np.std(means, ddof=1) / np.sqrt(n_batches))


def tiny_config(**overrides):
    """A fast, small configuration for smoke-level MCMC runs."""
    base = dict(P=1, Q_beta=1, Q_q=1, S_beta=3, S_q=3, n_min=2,
                n_draws=30, n_burn=10, thin=1, seed=0)
    base.update(overrides)
    return ModelConfig(**base)


def small_dataset(T=40, M=2, N=2, seed=0):
    """A stationary AR-ish panel with uniform modifiers; deterministic."""
    rng = np.random.default_rng(seed)
    Y = np.zeros((T, M))
    for t in range(1, T):
        Y[t] = 0.5 * Y[t - 1] + rng.normal(0.0, 0.3, M)
    Z = rng.uniform(0.0, 1.0, (T, N))
    return Dataset(
        Y=Y, Z=Z,
        variable_names=[f"y{m}" for m in range(M)],
        modifier_names=[f"z{n}" for n in range(N)],
        dates=[f"t{t:04d}" for t in range(T)],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260816)
