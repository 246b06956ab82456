import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsiweak.axisym import AxisymField
from nsiweak.cutoff import cutoff_field
from nsiweak.errors import SingularityError
from nsiweak.fields import Rect, Sum2D, Zero2D
from nsiweak.pressure import (PressureEvaluator, angular_kernel, pressure_eval, pressure_monte_carlo,
                              stress_trace)

U = Rect(0.0, 1.0, 1.0, 2.0)
V = Rect(1.5, 2.5, 1.0, 2.0)


def trapezoid_kernel(dx1, rho, s, n=2048):
    th = 2 * np.pi * np.arange(n) / n
    return np.mean(1.0 / np.sqrt(dx1 ** 2 + rho ** 2 + s ** 2 - 2 * rho * s * np.cos(th))) / 2


@pytest.fixture(scope="module")
def swirl():
    return AxisymField(cutoff_field(U, 0.2))


def test_kernel_on_axis():
    assert angular_kernel(0.0, 0.0, 1.0) == pytest.approx(0.5, rel=1e-14)


@settings(max_examples=30)
@given(dx1=st.floats(-3, 3), s=st.floats(0.05, 3))
def test_kernel_on_axis_general(dx1, s):
    assert angular_kernel(dx1, 0.0, s) == pytest.approx(1 / (2 * math.hypot(dx1, s)), rel=1e-12)


@pytest.mark.parametrize("dx1, rho, s", [(0.3, 1.2, 1.5), (1.0, 2.0, 0.5), (-0.05, 1.0, 1.1), (2.0, 0.4, 3.0)])
def test_kernel_matches_trapezoid(dx1, rho, s):
    assert angular_kernel(dx1, rho, s) == pytest.approx(trapezoid_kernel(dx1, rho, s), rel=1e-8)


def test_kernel_quad_method_agrees():
    args = (np.array([0.1, 0.7]), np.array([1.3, 0.9]), np.array([1.2, 2.0]))
    assert np.allclose(angular_kernel(*args), angular_kernel(*args, method="quad"), rtol=1e-11)


def test_kernel_singular_circle():
    with pytest.raises(SingularityError):
        angular_kernel(0.0, 1.5, 1.5)


def test_zero_field():
    u = AxisymField(Zero2D(U))
    assert np.all(stress_trace(u, np.array([[0.5, 1.5, 0.0], [0.2, 0.0, 1.1]])) == 0.0)
    assert pressure_eval(PressureEvaluator(u), 0.5, 1.5) == 0.0


def test_stress_trace_rotation_invariant(swirl, rng):
    th = rng.uniform(0, 2 * np.pi, 20)
    P = np.stack([np.full(20, 0.4), 1.3 * np.cos(th), 1.3 * np.sin(th)], axis=1)
    vals = stress_trace(swirl, P)
    assert np.allclose(vals, vals[0], rtol=1e-12)


def test_planar_derivative_in_x3_vanishes(swirl):
    # p*(x1, x2, +-h) both reduce to rho = hypot(x2, h): the central difference is zero
    pe = PressureEvaluator(swirl)
    h = 1e-3
    up = pressure_eval(pe, 0.5, math.hypot(1.4, h))
    down = pressure_eval(pe, 0.5, math.hypot(1.4, -h))
    assert abs(up - down) / (2 * h) < 1e-4


def test_disjoint_additivity(swirl):
    other = cutoff_field(V, 0.25)
    both = AxisymField(Sum2D(swirl.f, other))
    for x1, rho in [(0.5, 1.5), (1.2, 1.7), (2.0, 2.5)]:
        s = pressure_eval(PressureEvaluator(both), x1, rho)
        parts = pressure_eval(PressureEvaluator(swirl), x1, rho) + pressure_eval(
            PressureEvaluator(AxisymField(other)), x1, rho)
        assert abs(s - parts) < 1e-5


@pytest.mark.slow
def test_monte_carlo_oracle(swirl):
    exact = pressure_eval(PressureEvaluator(swirl), 0.2, 1.8)
    est, se = pressure_monte_carlo(swirl, (0.2, 1.8, 0.0), samples=2_000_000, seed=3)
    assert abs(est - exact) <= max(4 * se, 0.01 * abs(exact))


def test_monte_carlo_random_sampler_smoke(swirl):
    est, se = pressure_monte_carlo(swirl, (0.5, 1.5, 0.0), samples=200_000, sampler="random", batches=4)
    exact = pressure_eval(PressureEvaluator(swirl), 0.5, 1.5)
    assert se > 0 and abs(est - exact) <= 5 * se
