import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from recurrence.errors import DiversityProductTooSmall, InvalidObservation
from recurrence.estimators import (
    DIVERSITY_TOO_SMALL,
    LAMBDA0_NON_NEGATIVE,
    LAMBDA0_UNDEFINED,
    NO_SURVIVING_CLONES,
    Estimates,
    Observation,
    apply_detection_threshold,
    bootstrap_simpson,
    detectable_simpson_index,
    estimate,
    relative_errors,
    simpson_index,
    surviving_clone_count,
    u_statistic,
)
from recurrence.model import ModelParams, zeta

THETA = ModelParams(n=10**6, alpha=0.5, r0=0.5, d0=1.0, r1=1.5, d1=1.0)

sizes_lists = st.lists(st.integers(1, 10**6), min_size=1, max_size=200)


def estimate_high_precision(n, gamma, z0, i_n, r_n, digits=50):
    """The plug-in formulas evaluated directly (no log-space rewriting)."""
    with mpmath.workdps(digits):
        n, gamma, z0, i_n, r_n = map(mpmath.mpf, (n, gamma, z0, i_n, r_n))
        lam0 = mpmath.log(z0 / n) / gamma
        prod = i_n * r_n
        u = mpmath.sqrt(prod) / mpmath.sqrt(prod - 2) - 1
        lam1 = -lam0 / u
        r1 = (1 / u + 1) * n * lam1 / (i_n * mpmath.exp(lam1 * gamma))
        alpha = 1 - mpmath.log(i_n, n) + mpmath.log(lam1 / (-lam0 * r1), n)
        return tuple(float(v) for v in (lam0, lam1, r1, alpha, u))


@pytest.mark.parametrize("sizes, expected", [
    ([2, 2], 0.5), ([5], 1.0), ([], 0.0), ([3, 1], 0.625),
])
def test_simpson_examples(sizes, expected):
    assert simpson_index(sizes) == expected


def test_simpson_exact_for_huge_totals():
    sizes = [3_000_000_000, 1]
    total = sum(sizes)
    assert simpson_index(sizes) == (sizes[0] ** 2 + 1) / total**2


@given(sizes_lists)
def test_simpson_bounds(sizes):
    k = len(sizes)
    value = simpson_index(sizes)
    assert 1 / k - 1e-15 <= value <= 1.0
    if len(set(sizes)) == 1:
        assert value == pytest.approx(1 / k, rel=1e-12)
    else:
        assert value > 1 / k


@given(sizes_lists, st.integers(1, 1000))
def test_simpson_scale_invariant(sizes, c):
    assert simpson_index([c * s for s in sizes]) == pytest.approx(simpson_index(sizes), rel=1e-12)


@pytest.mark.parametrize("sizes, expected", [([2, 0, 3], 2), ([], 0), ([1] * 1000, 1000)])
def test_surviving_count(sizes, expected):
    assert surviving_clone_count(sizes) == expected


@pytest.mark.parametrize("z0, frac, expected", [
    (0, 0.10, [50, 30, 15]), (100, 0.10, [50, 30]), (100, 0.0, [50, 30, 15, 5]),
])
def test_detection_threshold(z0, frac, expected):
    assert apply_detection_threshold([50, 30, 15, 5], z0, frac).tolist() == expected


def test_detection_threshold_rejects_full_fraction():
    with pytest.raises(ValueError):
        apply_detection_threshold([1, 2], 0, 1.0)


def test_detectable_simpson_keeps_full_denominator():
    sizes = [50, 30, 15, 5]
    assert detectable_simpson_index(sizes, 0, 0.0) == simpson_index(sizes)
    assert detectable_simpson_index(sizes, 0, 0.10) == (2500 + 900 + 225) / 100**2


@given(sizes_lists, st.integers(0, 10**6), st.floats(0.0, 0.5))
def test_detectable_simpson_never_exceeds_full(sizes, z0, frac):
    assert detectable_simpson_index(sizes, z0, frac) <= simpson_index(sizes)


def test_u_statistic_examples():
    assert u_statistic(8 / 3, 1.0) == pytest.approx(1.0, rel=1e-14)
    assert u_statistic(8.0, 1.0) == pytest.approx(math.sqrt(8) / math.sqrt(6) - 1, rel=1e-14)
    assert u_statistic(8.0, 1.0) == pytest.approx(0.154701, abs=5e-7)
    with pytest.raises(DiversityProductTooSmall):
        u_statistic(2.0, 1.0)


@given(st.floats(2.001, 1e6), st.floats(1.001, 10.0))
def test_u_statistic_decreasing(p, factor):
    assert u_statistic(p * factor, 1.0) < u_statistic(p, 1.0)


def test_u_statistic_vanishes():
    assert u_statistic(1e12, 1.0) < 1e-11


def test_plug_in_limit_recovers_parameters():
    gamma = zeta(THETA)
    z0 = THETA.n * math.exp(THETA.lambda0 * gamma)
    est = estimate(Observation(THETA.n, gamma, z0, i_n=2000 / 3, r_n=0.004))
    assert est.ok
    assert est.lambda0_hat == pytest.approx(-0.5, rel=1e-9)
    assert est.u_n == pytest.approx(1.0, rel=1e-9)
    assert est.lambda1_hat == pytest.approx(0.5, rel=1e-9)
    residual = -math.expm1((THETA.lambda0 - THETA.lambda1) * gamma)
    assert abs(residual - 1) <= 2e-6 * 1.0001
    assert est.r1_hat == pytest.approx(1.5 * residual, rel=1e-9)
    assert abs(est.alpha_hat - 0.5) < 1e-5


def test_plug_in_with_rounded_sensitive_count():
    gamma = zeta(THETA)
    est = estimate(Observation(THETA.n, gamma, 1000, i_n=2000 / 3, r_n=0.004))
    assert est.lambda0_hat == pytest.approx(-0.5, abs=5e-7)
    assert est.r1_hat == pytest.approx(1.499999, abs=5e-6)


@given(
    st.integers(100, 10**9), st.floats(1.0, 40.0), st.floats(1e-3, 0.99),
    st.floats(3.0, 1e5), st.floats(1e-4, 1.0),
)
def test_log_space_matches_direct_evaluation(n, gamma, z0_frac, i_n, r_n):
    z0 = z0_frac * n
    if i_n * r_n <= 2.0 + 1e-6:
        return
    est = estimate(Observation(n, gamma, z0, i_n=i_n, r_n=r_n))
    ref = estimate_high_precision(n, gamma, z0, i_n, r_n)
    got = (est.lambda0_hat, est.lambda1_hat, est.r1_hat, est.alpha_hat, est.u_n)
    for value, expected in zip(got, ref):
        if expected != 0 and math.isfinite(expected) and abs(expected) > 1e-300:
            assert value == pytest.approx(expected, rel=1e-10, abs=1e-12)


def test_no_sensitive_cells():
    est = estimate(Observation(1000, 5.0, 0, clone_sizes=(3, 4)))
    assert est.diagnostics == {LAMBDA0_UNDEFINED}
    assert est.lambda0_hat is None and est.lambda1_hat is None and est.alpha_hat is None


def test_small_diversity_keeps_lambda0():
    est = estimate(Observation(1000, 5.0, 100, i_n=3, r_n=0.5))
    assert est.diagnostics == {DIVERSITY_TOO_SMALL}
    assert est.lambda0_hat == pytest.approx(math.log(0.1) / 5)
    assert est.lambda1_hat is None


def test_no_clones():
    est = estimate(Observation(1000, 5.0, 100, clone_sizes=()))
    assert est.diagnostics == {NO_SURVIVING_CLONES}


def test_growing_sensitive_population_flagged():
    est = estimate(Observation(1000, 5.0, 2000, i_n=100, r_n=0.1))
    assert est.diagnostics == {LAMBDA0_NON_NEGATIVE}
    assert est.lambda0_hat > 0


@pytest.mark.parametrize("obs", [
    Observation(1000, 0.0, 10), Observation(1, 1.0, 10), Observation(1000, 1.0, -1),
])
def test_invalid_observations(obs):
    with pytest.raises(InvalidObservation):
        estimate(obs)


def test_relative_errors():
    truth = THETA
    exact = Estimates(-0.5, 0.5, 1.5, 0.5, 1.0)
    assert relative_errors(exact, truth).as_dict() == {
        "lambda0": 0.0, "lambda1": 0.0, "r1": 0.0, "alpha": 0.0}
    errs = relative_errors(Estimates(lambda0_hat=-0.45), truth)
    assert errs.lambda0 == pytest.approx(0.1)
    assert errs.lambda1 is None


@given(sizes_lists, st.floats(0.0, 1.0), st.integers(0, 2**32))
def test_bootstrap_full_retention_is_exact(sizes, resample_frac, seed):
    assert bootstrap_simpson(sizes, 1.0, resample_frac, b=7, seed=seed) == simpson_index(sizes)


def test_bootstrap_deterministic():
    sizes = np.random.default_rng(3).integers(1, 500, size=300)
    a = bootstrap_simpson(sizes, seed=42, b=50)
    assert a == bootstrap_simpson(sizes, seed=42, b=50)
    assert a != bootstrap_simpson(sizes, seed=43, b=50)


def test_bootstrap_rejects_bad_arguments():
    with pytest.raises(ValueError):
        bootstrap_simpson([1, 2], keep_frac=1.5)
    with pytest.raises(ValueError):
        bootstrap_simpson([1, 2], b=0)
