import math

import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad

from wbansim.numerics import (DivergenceError, FixedPointProblem, NonConvergence,
                              q_function, solve_fixed_point)


def q_oracle(x):
    # Independent oracle: numerical integration of the normal tail.
    val, _ = quad(lambda t: math.exp(-t * t / 2.0) / math.sqrt(2.0 * math.pi),
                  x, x + 50.0)
    return val


def test_q_at_zero():
    assert q_function(0.0) == 0.5


def test_q_deep_tail():
    assert q_function(40.0) < 1e-300


def test_q_against_integration_oracle():
    for x in (-2.0, -0.5, 0.3, 1.0, 3.0, 5.0):
        assert q_function(x) == pytest.approx(q_oracle(x), abs=1e-12)


def test_q_at_three_matches_tabulated():
    assert q_function(3.0) == pytest.approx(1.3499e-3, abs=1e-7)


@given(st.floats(min_value=-8, max_value=8), st.floats(min_value=-8, max_value=8))
def test_q_monotone_decreasing(a, b):
    lo, hi = min(a, b), max(a, b)
    assert q_function(lo) >= q_function(hi)


@given(st.floats(min_value=-8, max_value=8))
def test_q_symmetry(x):
    assert q_function(x) + q_function(-x) == pytest.approx(1.0, abs=1e-12)


def test_linear_contraction():
    prob = FixedPointProblem(residual_map=lambda x: (0.5 * x[0] + 1.0,))
    res = solve_fixed_point(prob, (0.0,))
    assert res.x[0] == pytest.approx(2.0, rel=1e-8)
    assert res.residual <= prob.tolerance


def test_identity_map_returns_init_immediately():
    prob = FixedPointProblem(residual_map=lambda x: x)
    res = solve_fixed_point(prob, (0.3, 7.0))
    assert res.x == (0.3, 7.0)
    assert res.iterations == 1


@given(st.floats(min_value=-5, max_value=5), st.floats(min_value=-5, max_value=5))
def test_contraction_result_independent_of_init(i1, i2):
    prob = FixedPointProblem(residual_map=lambda x: (0.4 * x[0] - 1.0,))
    r1 = solve_fixed_point(prob, (i1,))
    r2 = solve_fixed_point(prob, (i2,))
    assert abs(r1.x[0] - r2.x[0]) <= 10 * prob.tolerance


def test_probability_coordinate_clamped():
    # Map pushes the probability coordinate above 1; clamp keeps it in range.
    prob = FixedPointProblem(residual_map=lambda x: (x[0],), prob_coords=(0,))
    res = solve_fixed_point(prob, (3.0,))
    assert res.x[0] <= 1.0


def test_nonconvergence_reported():
    prob = FixedPointProblem(residual_map=lambda x: (-x[0] + 1.0,), damping=1.0)
    # alpha=1 oscillates between 0 and 1 forever; the 0.1 retry converges.
    res = solve_fixed_point(prob, (0.0,))
    assert res.x[0] == pytest.approx(0.5, rel=1e-6)

    prob2 = FixedPointProblem(residual_map=lambda x: (x[0] + 1.0,),
                              max_iters=20, damping=0.1)
    with pytest.raises(NonConvergence):
        solve_fixed_point(prob2, (0.0,))


def test_divergence_error_on_nonfinite():
    prob = FixedPointProblem(residual_map=lambda x: (x[0] * 1e160 + 1e308,))
    with pytest.raises(DivergenceError):
        solve_fixed_point(prob, (1e308,))
