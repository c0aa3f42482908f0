"""Horseshoe conditionals, GIG sampling, and the process-variance draw."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate, special, stats

from treevar.core import TreevarError
from treevar.shrinkage import (
    HorseshoeBlock,
    draw_global_aux,
    draw_global_scale,
    draw_horseshoe_prior,
    draw_local_aux,
    draw_local_scales,
    sample_gig,
    sample_horseshoe,
    sample_process_variance,
)


def _mean_within(x, target, n_se=3):
    x = np.asarray(x)
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - target) < n_se * se, (
        f"mean {x.mean():.6g} vs {target:.6g} ({abs(x.mean()-target)/se:.2f} SEs)"
    )


# ---------------------------------------------------------------------------
# Horseshoe conditionals
# ---------------------------------------------------------------------------


def test_local_scale_conditional_single_coeff(rng):
    # a=1, r=1, global2=1 -> local2 ~ InvGamma(1, 1.5), so E[1/local2] = 1/1.5
    n = 100000
    draws = np.array([
        draw_local_scales(np.ones(1), np.ones(1), 1.0, rng)[0] for _ in range(n)
    ])
    assert np.all(draws > 0)
    _mean_within(1.0 / draws, 1.0 / 1.5)


def test_local_scale_conditional_zero_coeffs(rng):
    # a=0 -> local2_i ~ InvGamma(1, 1/r_i): E[1/local2_i] = r_i
    r = np.array([0.5, 2.0])
    draws = np.array([
        draw_local_scales(r, np.zeros(2), 3.0, rng) for _ in range(60000)
    ])
    _mean_within(1.0 / draws[:, 0], 0.5)
    _mean_within(1.0 / draws[:, 1], 2.0)


def test_global_scale_conditional_two_coeffs(rng):
    # n=2, a=(1,1), local2=(1,1), n_aux=1 -> scale = 1/1 + (1+1)/2 = 2 and
    # shape (n+1)/2 = 1.5, so E[1/global2] = 1.5/2 and E[1/global2^2] = 1.5*2.5/4
    n = 200000
    draws = np.array([
        draw_global_scale(1.0, np.ones(2), np.ones(2), rng) for _ in range(n)
    ])
    inv = 1.0 / draws
    _mean_within(inv, 0.75)
    _mean_within(inv**2, 1.5 * 2.5 / 4.0)


def test_aux_conditionals(rng):
    # r_i ~ InvGamma(1, 1 + 1/local2_i); n_aux ~ InvGamma(1, 1 + 1/global2)
    local2 = np.array([2.0])
    r = np.array([draw_local_aux(local2, rng)[0] for _ in range(60000)])
    _mean_within(1.0 / r, 1.0 / 1.5)
    aux = np.array([draw_global_aux(4.0, rng) for _ in range(60000)])
    _mean_within(1.0 / aux, 1.0 / 1.25)


def test_sample_horseshoe_requires_matching_size(rng):
    block = HorseshoeBlock.ones(3)
    with pytest.raises(TreevarError):
        sample_horseshoe(block, np.ones(2), rng)


def test_sample_horseshoe_all_positive(rng):
    block = HorseshoeBlock.ones(4)
    for _ in range(200):
        sample_horseshoe(block, rng.normal(0, 1, 4), rng)
        assert np.all(block.local2 > 0) and block.global2 > 0
        assert np.all(block.r > 0) and block.n_aux > 0
        assert np.all(block.prior_variances() == block.local2 * block.global2)


def test_horseshoe_prior_reproduction(rng):
    # Gibbs with a ~ N(0, local2*global2) redrawn each sweep leaves the prior
    # invariant: the chain's log global2 must keep the half-Cauchy^2 median ~ 0
    block = draw_horseshoe_prior(3, rng)
    log_g2 = np.empty(10000)
    for i in range(10000):
        a = rng.normal(0.0, np.sqrt(block.prior_variances()))
        sample_horseshoe(block, a, rng)
        log_g2[i] = math.log(block.global2)
    assert abs(np.median(log_g2[1000:])) < 0.5


def test_draw_horseshoe_prior_shapes(rng):
    block = draw_horseshoe_prior(5, rng)
    assert block.n == 5
    assert block.local2.shape == (5,) and block.r.shape == (5,)
    assert block.global2 > 0 and block.n_aux > 0


# ---------------------------------------------------------------------------
# GIG draws
# ---------------------------------------------------------------------------


def test_gig_domain_errors(rng):
    with pytest.raises(TreevarError):
        sample_gig(1.0, -1.0, 1.0, rng)
    with pytest.raises(TreevarError):
        sample_gig(1.0, 1.0, -1.0, rng)
    with pytest.raises(TreevarError):
        sample_gig(1.0, 0.0, 0.0, rng)


def test_gig_gamma_branch_mean(rng):
    # chi=0 -> Gamma(lam, rate psi/2): mean 2*lam/psi
    draws = sample_gig(2.0, 0.0, 4.0, rng, size=100000)
    _mean_within(draws, 1.0)


def test_gig_inverse_gamma_branch_mean(rng):
    # psi=0 -> InvGamma(-lam, chi/2): mean (chi/2)/(-lam-1)
    draws = sample_gig(-3.0, 4.0, 0.0, rng, size=100000)
    _mean_within(draws, 1.0)


def _gig_mean_quadrature(lam, chi, psi):
    def unnorm(x):
        return x ** (lam - 1.0) * math.exp(-0.5 * (chi / x + psi * x))

    mode = (lam - 1 + math.sqrt((lam - 1) ** 2 + chi * psi)) / psi
    hi = max(50.0 * mode, 50.0)
    z0, _ = integrate.quad(unnorm, 1e-12, hi, points=[mode], limit=500)
    z1, _ = integrate.quad(lambda x: x * unnorm(x), 1e-12, hi, points=[mode],
                           limit=500)
    return z1 / z0


def test_gig_general_mean_bessel_and_quadrature(rng):
    # lam=-0.5, chi=psi=1: mean = K_{1/2}(1)/K_{-1/2}(1) = 1 exactly
    b = math.sqrt(1.0)
    bessel = math.sqrt(1.0) * special.kv(0.5, b) / special.kv(-0.5, b)
    assert bessel == pytest.approx(1.0, rel=1e-12)
    assert _gig_mean_quadrature(-0.5, 1.0, 1.0) == pytest.approx(1.0, rel=1e-8)
    draws = sample_gig(-0.5, 1.0, 1.0, rng, size=100000)
    _mean_within(draws, 1.0)


def test_gig_large_negative_order_mean(rng):
    # the process-variance regime: GIG(-49.5, 4, 50)
    lam, chi, psi = -49.5, 4.0, 50.0
    b = math.sqrt(chi * psi)
    bessel = math.sqrt(chi / psi) * (special.kve(lam + 1, b) / special.kve(lam, b))
    quad = _gig_mean_quadrature(lam, chi, psi)
    assert quad == pytest.approx(bessel, rel=1e-8)
    draws = sample_gig(lam, chi, psi, rng, size=100000)
    _mean_within(draws, quad)


@pytest.mark.parametrize(
    "lam, chi, psi",
    [
        (0.5, 2.0, 3.0),
        (-0.5, 1.0, 1.0),
        (2.0, 1.0, 4.0),
        (-3.0, 4.0, 2.0),
        (5.0, 0.1, 0.1),
    ],
)
def test_gig_goodness_of_fit(lam, chi, psi, rng):
    # histogram of 1e6 draws vs the density through its quantile bins
    n = 1_000_000
    draws = sample_gig(lam, chi, psi, rng, size=n)
    b = math.sqrt(chi * psi)
    scale = math.sqrt(chi / psi)
    dist = stats.geninvgauss(lam, b, scale=scale)
    edges = dist.ppf(np.linspace(0.0, 1.0, 51))
    edges[0], edges[-1] = 0.0, np.inf
    observed, _ = np.histogram(draws, bins=edges)
    chi2, p = stats.chisquare(observed)
    assert p > 0.001, f"GOF p={p:.2e} (chi2={chi2:.1f})"


def test_gig_scalar_vs_size_types(rng):
    x = sample_gig(0.5, 1.0, 1.0, rng)
    assert isinstance(x, float) and x > 0
    arr = sample_gig(0.5, 1.0, 1.0, rng, size=7)
    assert arr.shape == (7,) and np.all(arr > 0)


# ---------------------------------------------------------------------------
# Process variances
# ---------------------------------------------------------------------------


def test_process_variance_posterior_mean(rng):
    # eta'eta = 4 over T=100 with B_v=0.01 -> GIG(-49.5, 4, 50)
    eta = np.zeros(100)
    eta[0] = 2.0
    want = _gig_mean_quadrature(-49.5, 4.0, 50.0)
    draws = np.array([sample_process_variance(eta, 0.01, rng)
                      for _ in range(100000)])
    _mean_within(draws, want)


def test_process_variance_recovers_simulated_truth(rng):
    # v^2 = 0.04, T = 500: the conditional mean should land within 50% of truth
    eta = rng.normal(0.0, 0.2, 500)
    draws = np.array([sample_process_variance(eta, 0.01, rng)
                      for _ in range(5000)])
    assert 0.02 < draws.mean() < 0.06


def test_process_variance_zero_innovations(rng):
    # exact-fit boundary: lam floored, essentially-zero but positive draw
    v = sample_process_variance(np.zeros(1), 0.01, rng)
    assert 0 < v < 1e-3
    v = sample_process_variance(np.zeros(10), 0.01, rng)
    assert 0 < v < 1e-3


def test_process_variance_needs_data(rng):
    with pytest.raises(TreevarError):
        sample_process_variance(np.zeros(0), 0.01, rng)
