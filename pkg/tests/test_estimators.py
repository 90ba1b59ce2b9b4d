import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from ccsketch.estimators import (
    EstimatorKind,
    estimate_gm,
    estimate_hm,
    estimate_mle05,
    estimate_op,
    estimate_oq,
    estimate_quantile,
    evaluate,
    g_function,
    gm_denominator,
    gm_values,
    hm_values,
    kappa,
    lambda_domain,
    log_abs_moment,
    mle05_values,
    op_values,
    optimal_lambda,
    quantile_values,
    variance_factor,
)
from ccsketch.stable import SeededGenerator, stable_transform


def draws(alpha, shape, seed=0, scale=1.0):
    """Counters with moment ``scale``: ``scale**(1/alpha)`` times standard variates."""
    n = int(np.prod(shape))
    u, e = SeededGenerator(seed).uniform_exponential(n)
    return scale ** (1.0 / alpha) * stable_transform(alpha, 1.0, u, e).reshape(shape)


def rel_var(est, k):
    return k * np.var(est, ddof=1) / np.mean(est) ** 2


def test_kappa():
    assert kappa(0.5) == 0.5
    assert kappa(1.5) == 0.5
    assert kappa(2.0) == 0.0
    with pytest.raises(ValueError):
        kappa(1.0)


# ---- moments -------------------------------------------------------------

@pytest.mark.parametrize("gam", [-3.0, -1.0, -0.3, 0.2, 0.45])
def test_moment_at_half_matches_levy(gam):
    # S(1/2, 1, 1) is 1/Z**2 for a standard normal Z
    levy = -gam * math.log(2.0) + math.lgamma(0.5 - gam) - math.lgamma(0.5)
    assert float(log_abs_moment(gam, 0.5)) == pytest.approx(levy, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.3, 0.7, 1.2, 1.5, 1.8])
@pytest.mark.parametrize("gam", [-0.6, -0.2, 0.15, 0.25])
def test_moment_matches_cosine_gamma_form(alpha, gam):
    kap = kappa(alpha)
    ref = (
        special.gamma(1 - gam / alpha) * math.cos(kap * gam * math.pi / (2 * alpha))
        / (math.cos(kap * math.pi / 2) ** (gam / alpha) * special.gamma(1 - gam) * math.cos(gam * math.pi / 2))
    )
    assert float(log_abs_moment(gam, alpha)) == pytest.approx(math.log(ref), abs=1e-12)


def test_moment_continuous_through_one():
    for alpha in (1.2, 1.7):
        a = log_abs_moment(np.array([1 - 1e-7, 1.0, 1 + 1e-7]), alpha)
        assert np.all(np.isfinite(a))
        assert a[0] == pytest.approx(a[1], abs=1e-5)
        assert a[2] == pytest.approx(a[1], abs=1e-5)


@pytest.mark.parametrize("alpha,gam", [(0.6, 0.3), (1.5, 0.5), (1.5, -0.4), (2.0, 1.5)])
def test_moment_monte_carlo(alpha, gam):
    z = np.abs(draws(alpha, (10**6,), seed=21))
    mc = np.mean(z**gam)
    assert math.log(mc) == pytest.approx(float(log_abs_moment(gam, alpha)), abs=0.02)


def test_moment_out_of_range_is_nan():
    assert np.isnan(log_abs_moment(1.6, 1.5))
    assert np.isnan(log_abs_moment(-1.0, 1.5))
    assert np.isnan(log_abs_moment(0.5, 0.5))
    assert np.isnan(log_abs_moment(-1.0, 2.0))


# ---- scale equivariance ----------------------------------------------------

@given(st.floats(1e-3, 1e3), st.sampled_from([0.3, 0.5, 0.8]))
@settings(max_examples=40, deadline=None)
def test_estimators_scale_by_c_to_alpha_below_one(c, alpha):
    x = draws(alpha, (50,), seed=3)
    for kind in (EstimatorKind.GEOMETRIC_MEAN, EstimatorKind.HARMONIC_MEAN, EstimatorKind.OPTIMAL_POWER):
        a = evaluate(kind, c * x, alpha)
        b = evaluate(kind, x, alpha)
        assert a == pytest.approx(c**alpha * b, rel=1e-9)
    q = quantile_values(c * x, alpha, 0.2, 0.3)
    assert q == pytest.approx(c**alpha * quantile_values(x, alpha, 0.2, 0.3), rel=1e-12)


@given(st.floats(1e-3, 1e3), st.sampled_from([1.2, 1.5, 2.0]))
@settings(max_examples=40, deadline=None)
def test_estimators_scale_by_c_to_alpha_above_one(c, alpha):
    x = draws(alpha, (50,), seed=4)
    for kind in (EstimatorKind.GEOMETRIC_MEAN, EstimatorKind.OPTIMAL_POWER, EstimatorKind.OPTIMAL_QUANTILE):
        assert evaluate(kind, c * x, alpha) == pytest.approx(c**alpha * evaluate(kind, x, alpha), rel=1e-9)


def test_mle_scale():
    x = draws(0.5, (40,), seed=5)
    assert estimate_mle05(9.0 * x).value == pytest.approx(3.0 * estimate_mle05(x).value)


# ---- geometric mean ------------------------------------------------------------

def test_gm_denominator_finite_positive():
    for alpha in (0.05, 0.3, 0.5, 0.9, 0.99, 1.01, 1.3, 1.7, 2.0):
        for k in (2, 3, 10, 100, 1000, 10**4):
            d = gm_denominator(alpha, k)
            assert math.isfinite(d) and d > 0


def test_gm_denominator_is_product_of_moments():
    for alpha in (0.3, 0.75, 1.25, 1.8, 2.0):
        for k in (2, 10, 500):
            ref = k * float(log_abs_moment(alpha / k, alpha))
            assert math.log(gm_denominator(alpha, k)) == pytest.approx(ref, abs=1e-9)


def test_gm_denominator_monte_carlo():
    x = draws(0.5, (20000, 100), seed=6)
    prod = np.exp((0.5 / 100) * np.log(np.abs(x)).sum(axis=1))
    assert prod.mean() / gm_denominator(0.5, 100) == pytest.approx(1.0, abs=0.01)


def test_gm_rejects_k1_and_handles_zero_counter():
    with pytest.raises(ValueError):
        estimate_gm([1.0], 0.5)
    assert estimate_gm([0.0, 1.0, 2.0], 1.5).value == 0.0


def test_gm_all_equal_counters():
    k, alpha, c = 10, 1.5, 2.0
    assert estimate_gm(np.full(k, c), alpha).value == pytest.approx(c**alpha / gm_denominator(alpha, k))


# ---- harmonic mean -------------------------------------------------------------

def test_hm_factor_limits():
    assert variance_factor(EstimatorKind.HARMONIC_MEAN, 0.5) == pytest.approx(math.pi / 2 - 1)
    assert variance_factor(EstimatorKind.HARMONIC_MEAN, 1e-6) == pytest.approx(1.0, abs=1e-4)


def test_hm_rejects():
    with pytest.raises(ValueError):
        estimate_hm([1.0, 2.0], 1.5)
    with pytest.raises(ValueError):
        estimate_hm([1.0, -2.0], 0.5)


def test_hm_variance_and_bias():
    k = 500
    est = hm_values(draws(0.5, (4000, k), seed=7), 0.5)
    assert rel_var(est, k) == pytest.approx(math.pi / 2 - 1, rel=0.10)
    k = 100
    est = hm_values(draws(0.75, (20000, k), seed=8), 0.75)
    se = est.std(ddof=1) / math.sqrt(len(est))
    assert abs(est.mean() - 1.0) < 3 * se


# ---- MLE at one half ---------------------------------------------------------

def test_mle_constant_counters():
    k, c = 8, 4.0
    assert estimate_mle05(np.full(k, c)).value == pytest.approx((1 - 0.75 / k) * 2.0)


def test_mle_variance_and_bias():
    k = 500
    est = mle05_values(draws(0.5, (4000, k), seed=9))
    assert rel_var(est, k) == pytest.approx(0.5, rel=0.10)
    k = 50
    est = mle05_values(draws(0.5, (40000, k), seed=10, scale=3.0))
    se = est.std(ddof=1) / math.sqrt(len(est))
    assert abs(est.mean() - 3.0) < 3 * se


# ---- optimal power -----------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.3, 0.5, 0.8, 1.2, 1.5, 1.8, 2.0])
def test_g_positive_on_domain(alpha):
    lo, hi = lambda_domain(alpha)
    lam = np.linspace(max(lo, -20) + 1e-3, hi - 1e-3, 500)
    lam = lam[np.abs(lam) > 1e-3]
    assert np.all(g_function(lam, alpha) > 0)


def test_g_rejects_outside_domain():
    for lam in (0.0, 0.5, 0.6):
        with pytest.raises(ValueError):
            g_function(lam, 1.5)
    with pytest.raises(ValueError):
        g_function(-0.4, 1.5)


def test_optimal_lambda_examples():
    assert optimal_lambda(0.5) == pytest.approx(-2.0, abs=1e-4)
    assert g_function(optimal_lambda(0.5), 0.5) == pytest.approx(0.5, abs=1e-6)
    assert optimal_lambda(2.0) == pytest.approx(1.0, abs=1e-4)
    assert g_function(optimal_lambda(2.0), 2.0) == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.2, 0.5, 0.8, 0.9, 0.95, 1.05, 1.1, 1.5, 1.8, 1.95, 2.0])
def test_optimal_lambda_is_local_min_and_beats_gm(alpha):
    lam = optimal_lambda(alpha)
    if alpha < 1:
        assert lam < 0
    g = g_function(lam, alpha)
    for d in (-0.01, 0.01):
        assert g <= g_function(lam + d, alpha) + 1e-12
    assert g <= variance_factor(EstimatorKind.GEOMETRIC_MEAN, alpha) + 1e-9


def test_power_estimator_variance_matches_g():
    # a non-optimal lambda, so the check is not specific to lambda*
    k, lam = 300, -0.5
    est = op_values(draws(0.5, (8000, k), seed=11), 0.5, lam)
    assert rel_var(est, k) == pytest.approx(g_function(lam, 0.5), rel=0.10)


def test_op_variance_at_half():
    k = 500
    est = evaluate(EstimatorKind.OPTIMAL_POWER, draws(0.5, (4000, k), seed=12), 0.5)
    assert rel_var(est, k) == pytest.approx(0.5, rel=0.10)


def test_op_bias_at_one_and_a_half():
    k = 200
    est = evaluate(EstimatorKind.OPTIMAL_POWER, draws(1.5, (20000, k), seed=13), 1.5)
    se = est.std(ddof=1) / math.sqrt(len(est))
    assert abs(est.mean() - 1.0) < 3 * se
    assert estimate_op(draws(1.5, (k,), seed=1), 1.5).kind is EstimatorKind.OPTIMAL_POWER


# ---- quantile ---------------------------------------------------------------

def test_quantile_constant_sample():
    assert estimate_quantile(np.full(20, -3.0), 1.5, 0.3, 2.0).value == pytest.approx(1.5**1.5)


def test_quantile_order_statistic_rank():
    x = np.arange(1.0, 1001.0)
    # 0.137 * 1000 must select rank 137, not 138
    assert quantile_values(x, 0.5, 0.137, 1.0) == pytest.approx(math.sqrt(137.0))


def test_quantile_mean_at_half():
    est = quantile_values(draws(0.5, (10**4, 1000), seed=14), 0.5, 0.137, 0.4522449)
    assert est.mean() == pytest.approx(1.0, rel=0.02)


def test_oq_uses_table_row():
    x = draws(1.5, (100,), seed=15)
    assert estimate_oq(x, 1.5).value == pytest.approx(estimate_quantile(x, 1.5, 0.778, 2.191925).value)
    with pytest.raises(KeyError):
        estimate_oq(x, 1.55)


def test_oq_variance():
    k = 500
    est = evaluate(EstimatorKind.OPTIMAL_QUANTILE, draws(1.5, (4000, k), seed=16), 1.5)
    assert rel_var(est, k) == pytest.approx(1.502868, rel=0.15)
    k = 2000
    est = evaluate(EstimatorKind.OPTIMAL_QUANTILE, draws(0.9, (2000, k), seed=17), 0.9)
    assert rel_var(est, k) == pytest.approx(0.04116676, rel=0.20)


# ---- closed-form variance factors -------------------------------------------

def test_variance_factor_examples():
    assert variance_factor(EstimatorKind.GEOMETRIC_MEAN, 1.5) == pytest.approx(2.879, abs=5e-4)
    assert variance_factor(EstimatorKind.GEOMETRIC_MEAN, 0.5) == pytest.approx(1.2337, abs=5e-4)
    assert variance_factor(EstimatorKind.OPTIMAL_QUANTILE, 0.5) == 0.76653704
    assert variance_factor(EstimatorKind.MLE05, 0.5) == 0.5
    with pytest.raises(ValueError):
        variance_factor(EstimatorKind.QUANTILE, 0.5)
    with pytest.raises(ValueError):
        variance_factor(EstimatorKind.MLE05, 0.6)


def test_gm_factor_matches_log_variance():
    # V_gm = (alpha**2) * Var(log|X|), the second derivative of the log moment at 0
    for alpha in (0.3, 0.8, 1.3, 1.9):
        h = 1e-4
        lm = lambda t: float(log_abs_moment(t, alpha))
        var_log = (lm(h) - 2 * lm(0.0) + lm(-h)) / h**2
        assert variance_factor(EstimatorKind.GEOMETRIC_MEAN, alpha) == pytest.approx(alpha**2 * var_log, rel=1e-5)


def test_variance_ordering():
    gm, hm, oq, op = (EstimatorKind.GEOMETRIC_MEAN, EstimatorKind.HARMONIC_MEAN,
                      EstimatorKind.OPTIMAL_QUANTILE, EstimatorKind.OPTIMAL_POWER)
    for alpha in (0.2, 0.3, 0.5, 0.7, 0.9):
        assert variance_factor(hm, alpha) < variance_factor(gm, alpha)
        assert variance_factor(op, alpha) <= variance_factor(hm, alpha) + 1e-9
    for alpha in (1.1, 1.3, 1.5, 1.8):
        assert variance_factor(oq, alpha) < variance_factor(gm, alpha)


def test_gm_factor_decreases_toward_one():
    f = lambda a: variance_factor(EstimatorKind.GEOMETRIC_MEAN, a)
    below = [f(a) for a in (0.8, 0.9, 0.95, 0.98, 0.999)]
    above = [f(a) for a in (1.2, 1.1, 1.05, 1.02, 1.001)]
    assert all(x > y for x, y in zip(below, below[1:]))
    assert all(x > y for x, y in zip(above, above[1:]))
    assert below[-1] < 1e-2 and above[-1] < 1e-2


def test_kind_parse_and_checks():
    assert EstimatorKind.parse("GM") is EstimatorKind.GEOMETRIC_MEAN
    assert EstimatorKind.parse("optimal_quantile") is EstimatorKind.OPTIMAL_QUANTILE
    with pytest.raises(ValueError):
        EstimatorKind.parse("median")
    with pytest.raises(ValueError):
        evaluate(EstimatorKind.QUANTILE, [1.0, 2.0], 0.5)
