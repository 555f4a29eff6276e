import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from scacopf.costs import CostFunction, PenaltySpec, PenaltyTiers, hinge, penalty_value, smoothed_penalty

TIERS = PenaltyTiers(((0.1, 100.0), (math.inf, 1000.0)))


def test_first_tier():
    assert penalty_value(TIERS, 0.05) == pytest.approx(5.0, abs=1e-12)


def test_second_tier():
    assert penalty_value(TIERS, 0.25) == pytest.approx(160.0, abs=1e-12)


def test_symmetric_zero_and_flat_derivative():
    val, d = smoothed_penalty(TIERS, 0.0, 1e-3)
    assert penalty_value(TIERS, 0.0) == 0.0
    assert d == 0.0
    assert val > 0


def test_symmetric_uses_absolute_value():
    assert penalty_value(TIERS, -0.25) == penalty_value(TIERS, 0.25)


def test_one_sided_ignores_negative():
    over = PenaltyTiers(((0.05, 1e3), (math.inf, 5e5)), symmetric=False)
    assert penalty_value(over, -1.0) == 0.0
    assert penalty_value(over, 0.06) == pytest.approx(0.05 * 1e3 + 0.01 * 5e5)


def test_default_spec_valid():
    assert PenaltySpec.default().problems() == []


def test_tier_problems():
    assert PenaltyTiers(((0.1, 10.0), (math.inf, 5.0))).problems()
    assert PenaltyTiers(((0.0, 10.0),)).problems()


@given(st.floats(-1, 1), st.sampled_from([1e-4, 1e-3, 1e-2]))
def test_smoothing_error_bound(s, mu):
    exact = penalty_value(TIERS, s)
    smooth, _ = smoothed_penalty(TIERS, s, mu)
    # at most one kink is within mu of any point for these tiers and mu
    assert 0.0 <= float(smooth) - exact <= 1000.0 * mu / 2 + 1e-9


@given(st.floats(-1, 1))
def test_smoothed_equals_exact_away_from_kinks(s):
    mu = 1e-3
    if min(abs(s), abs(abs(s) - 0.1)) > mu:
        assert float(smoothed_penalty(TIERS, s, mu)[0]) == pytest.approx(penalty_value(TIERS, s), abs=1e-12)


def test_smoothed_derivative_matches_fd():
    mu = 1e-2
    h = 1e-7
    # offset keeps the stencil off the window edges, where the second derivative jumps
    for s in np.linspace(-0.3, 0.3, 61) + 1.3e-3:
        _, d = smoothed_penalty(TIERS, s, mu)
        fd = (smoothed_penalty(TIERS, s + h, mu)[0] - smoothed_penalty(TIERS, s - h, mu)[0]) / (2 * h)
        assert float(d) == pytest.approx(float(fd), rel=1e-5, abs=1e-5)


def test_hinge_is_c1():
    mu = 0.1
    for t in (-mu, mu):
        left = hinge(t - 1e-12, mu)
        right = hinge(t + 1e-12, mu)
        assert float(left[0]) == pytest.approx(float(right[0]), abs=1e-10)
        assert float(left[1]) == pytest.approx(float(right[1]), abs=1e-9)


def test_cost_function_piecewise():
    c = CostFunction(((0.0, 10.0), (1.0, 30.0)))
    assert c(0.5) == pytest.approx(5.0)
    assert c(2.0) == pytest.approx(10.0 + 30.0)
    assert c.problems() == []


def test_nonconvex_cost_reported():
    assert CostFunction(((0.0, 30.0), (1.0, 10.0))).problems()
