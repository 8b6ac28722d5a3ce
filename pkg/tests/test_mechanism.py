import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chebdp.basis import MomentIndexSet
from chebdp.errors import BudgetError
from chebdp.grid import Grid, histogram
from chebdp.mechanism import (
    MomentVector,
    NoiseCalibration,
    PrivacyBudget,
    S_upper_bound,
    calibrate,
    compute_S,
    empirical_moments,
    gaussian_sigma,
    grid_moments,
    privatize,
    sensitivity_bound,
)

from . import oracles


def test_budget_validation():
    PrivacyBudget(0.5, 1e-6)
    for eps, delta in [(0, 1e-5), (-1, 1e-5), (1, 0), (1, 0.5), (1, 1.2), (math.inf, 1e-5)]:
        with pytest.raises(BudgetError):
            PrivacyBudget(eps, delta)


def test_moments_at_origin_vanish():
    mv = empirical_moments(np.zeros((10, 1)), MomentIndexSet(1, 3))
    assert mv.values[0] == pytest.approx(0.0, abs=1e-15)


def test_symmetric_pair_first_moment():
    mv = empirical_moments(np.array([[1.0], [-1.0]]), MomentIndexSet(1, 1))
    assert mv.values[0] == pytest.approx(0.0, abs=1e-15)


def test_moments_match_direct_summation(rng):
    X = rng.uniform(-1, 1, size=(5, 2))
    I = MomentIndexSet(2, 3)
    mv = empirical_moments(X, I)
    expected = oracles.moments(X, np.full(5, 0.2), 2, 3)
    np.testing.assert_allclose(mv.values, expected, atol=1e-13)
    k21 = oracles.index_list(2, 3).index((2, 1))
    assert mv.values[k21] == pytest.approx(np.mean([oracles.cheb_point((2, 1), x) for x in X]), abs=1e-14)


def test_grid_moments_equal_empirical_moments_of_snapped_points(rng):
    g = Grid(2, 5)
    X = rng.uniform(-1, 1, size=(40, 2))
    I = MomentIndexSet(2, 4)
    from chebdp.grid import snap

    direct = empirical_moments(snap(X, g), I).values
    via_grid = grid_moments(histogram(X, g), g.axis_points(), I).values
    np.testing.assert_allclose(via_grid, direct, atol=1e-13)


def test_moment_vector_shape_checked():
    with pytest.raises(ValueError):
        MomentVector(MomentIndexSet(1, 3), np.zeros(4))
    t = MomentVector(MomentIndexSet(1, 2), [0.5, 0.25]).tensor()
    np.testing.assert_array_equal(t, [1.0, 0.5, 0.25])


def test_S_examples():
    assert compute_S(MomentIndexSet(1, 3), 1) == pytest.approx(11 / 6, abs=1e-15)
    assert compute_S(MomentIndexSet(1, 2), 2) == pytest.approx(1.25, abs=1e-15)
    assert compute_S(MomentIndexSet(2, 1), 1) == pytest.approx(2 + 1 / math.sqrt(2), abs=1e-15)


@given(st.integers(1, 3), st.integers(1, 5), st.integers(1, 12))
def test_S_below_closed_form(d, k, m):
    S = compute_S(MomentIndexSet(d, m), k)
    direct = sum(math.sqrt(sum(t * t for t in K)) ** (-k) for K in oracles.index_list(d, m))
    assert S == pytest.approx(direct, rel=1e-12)
    assert S <= S_upper_bound(d, k, m) * (1 + 1e-12)


def test_sensitivity_examples():
    assert sensitivity_bound(1, 1, 1.0, "measure") == pytest.approx(8 / math.pi)
    assert sensitivity_bound(100, 2, 11 / 6, "measure") == pytest.approx(16 / math.pi**2 * (11 / 6) / 1e4)
    assert sensitivity_bound(1, 1, 1.0) == pytest.approx(8.0)
    for conv in ("sup", "measure"):
        assert sensitivity_bound(20, 2, 3.0, conv) == pytest.approx(sensitivity_bound(10, 2, 3.0, conv) / 4)
    with pytest.raises(ValueError):
        sensitivity_bound(1, 1, 1.0, "other")


def _sq_sensitivity(x, x_prime, I, k, n):
    """Scaled squared change of the moment vector when one of n records moves."""
    diff = (empirical_moments(x[None], I).values - empirical_moments(x_prime[None], I).values) / n
    return float(np.sum(I.weights(k) * diff**2))


@given(st.integers(1, 2), st.integers(1, 2), st.integers(1, 5), st.integers(1, 50), st.data())
def test_sup_sensitivity_bound_holds(d, k, m, n, data):
    coord = st.floats(-1, 1)
    x = np.array([data.draw(coord) for _ in range(d)])
    xp = np.array([data.draw(coord) for _ in range(d)])
    I = MomentIndexSet(d, m)
    assert _sq_sensitivity(x, xp, I, k, n) <= sensitivity_bound(n, d, compute_S(I, k)) * (1 + 1e-12)


def test_measure_convention_is_exceeded_by_opposite_corners():
    # T_1 swings from sqrt(2) to -sqrt(2): squared change 8, above 8/pi
    I = MomentIndexSet(1, 1)
    observed = _sq_sensitivity(np.array([1.0]), np.array([-1.0]), I, 1, 1)
    assert observed == pytest.approx(8.0)
    assert observed > sensitivity_bound(1, 1, 1.0, "measure")
    assert observed <= sensitivity_bound(1, 1, 1.0, "sup") + 1e-12


def test_calibrate_classical_example():
    cal = calibrate(PrivacyBudget(1 - 1e-9, 0.1), 1, 1, 1.0, convention="measure")
    assert cal.branch == "classical"
    expected = math.sqrt(8 / math.pi) * math.sqrt(2 * math.log(12.5)) / (1 - 1e-9)
    assert cal.sigma == pytest.approx(expected, rel=1e-12)


def test_calibrate_scaling_in_epsilon():
    a = calibrate(PrivacyBudget(0.4, 1e-5), 100, 2, 3.0)
    b = calibrate(PrivacyBudget(0.8, 1e-5), 100, 2, 3.0)
    assert b.sigma == pytest.approx(a.sigma / 2)


def test_calibrate_large_epsilon_branch():
    cal = calibrate(PrivacyBudget(1.5, 0.25), 1, 1, 1.0)
    assert cal.branch == "general"
    delta2 = math.sqrt(8.0)
    expected = math.sqrt(2) * delta2 / 1.5 * math.sqrt(math.log(1 / 0.75) + 1.5)
    assert cal.sigma == pytest.approx(expected, rel=1e-12)


@given(st.floats(0.01, 10), st.floats(1e-10, 0.05), st.integers(1, 3), st.integers(1, 10**5))
def test_sigma_at_least_step3_minimum(eps, delta, d, n):
    budget = PrivacyBudget(eps, delta)
    cal = calibrate(budget, n, d, 2.5, convention="measure")
    assert cal.sigma_sq >= cal.step3_lower_bound(budget, n, d, "measure") * (1 - 1e-12)


@given(st.floats(0.01, 0.99), st.floats(1e-9, 0.1))
def test_gaussian_sigma_monotone_in_delta(eps, delta):
    b1, b2 = PrivacyBudget(eps, delta), PrivacyBudget(eps, delta / 2)
    assert gaussian_sigma(1.0, b2)[0] > gaussian_sigma(1.0, b1)[0]


def _fake_release(d=2, m=3, sigma_sq=0.3, k=1):
    I = MomentIndexSet(d, m)
    cal = NoiseCalibration(S=compute_S(I, k), sigma_sq=sigma_sq, k=k, sensitivity_sq=1.0, branch="classical")
    return MomentVector(I, np.linspace(-0.5, 0.5, len(I))), cal


def test_privatize_zero_noise_is_identity():
    mv, cal = _fake_release(sigma_sq=0.0)
    out = privatize(mv, cal, seed=123)
    np.testing.assert_array_equal(out.values, mv.values)
    assert out.values is not mv.values


def test_privatize_deterministic_per_seed():
    mv, cal = _fake_release()
    a = privatize(mv, cal, 7).values
    b = privatize(mv, cal, 7).values
    c = privatize(mv, cal, 8).values
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_privatize_variances():
    mv, cal = _fake_release(d=2, m=3, sigma_sq=0.04, k=2)
    draws = np.stack([privatize(mv, cal, s).values - mv.values for s in range(20000)])
    target = mv.index_set.norm_sq() ** (2 / 2) * 0.04
    np.testing.assert_allclose(draws.var(axis=0), target, rtol=0.05)
    np.testing.assert_allclose(draws.mean(axis=0), 0.0, atol=5 * np.sqrt(target.max() / 20000))
