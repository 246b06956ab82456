import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsiweak.axisym import AxisymField, Lf_eval, axisym_identities, lift_eval, lp_norm, sup_f_Lf
from nsiweak.cutoff import cutoff_field
from nsiweak.errors import DomainError
from nsiweak.fields import (Constant1D, Indicator2D, Polynomial1D, Rect, Separable2D, Zero2D)

U = Rect(0.0, 1.0, 1.0, 2.0)


def poly_x2(coeffs, g1=None, support=None):
    return Separable2D(g1 or Constant1D(1.0), Polynomial1D(coeffs), support=support)


def cyl_points(rng, rect, n):
    x1 = rng.uniform(rect.a1, rect.b1, n)
    rho = rng.uniform(rect.a2, rect.b2, n)
    th = rng.uniform(0, 2 * np.pi, n)
    return np.stack([x1, rho * np.cos(th), rho * np.sin(th)], axis=1), x1, rho


def test_v0_lift_is_azimuthal():
    u = AxisymField(cutoff_field(U, 0.2))
    val = lift_eval(u, np.array([0.5, 1.5, 0.0]))
    assert val == pytest.approx([0.0, 0.0, 1.0])


def test_lift_vanishes_outside_support(recipe):
    u = AxisymField(recipe.f, recipe.v)
    pts = np.array([[-0.5, 1.5, 0.0], [1.0, 0.0, 3.5], [2.5, 2.0, 0.0], [1.0, 0.2, 0.1]])
    assert np.all(lift_eval(u, pts) == 0.0)


def test_lift_magnitude_equals_f(recipe, rng):
    u = AxisymField(recipe.f, recipe.v)
    P, x1, rho = cyl_points(rng, recipe.rect, 1000)
    w = lift_eval(u, P)
    mag = np.hypot(np.hypot(w[:, 0], w[:, 1]), w[:, 2])  # no underflow for tiny f
    f = recipe.f(x1, rho)
    assert np.allclose(mag, f, rtol=1e-10, atol=1e-300)


@pytest.mark.parametrize("coeffs, expected", [([0, 1], 0.0), ([0, 0, 1], 3.0)])
def test_L_of_powers(coeffs, expected, rng):
    x1 = rng.uniform(-2, 2, 50)
    x2 = rng.uniform(0.1, 5, 50)
    assert np.allclose(Lf_eval(poly_x2(coeffs), x1, x2), expected, atol=1e-12)


@settings(max_examples=40)
@given(x1=st.floats(-2, 2), x2=st.floats(0.1, 4))
def test_L_separable(x1, x2):
    g = Polynomial1D([1.0, -2.0, 0.5, 0.25])
    f = poly_x2([0, 1], g1=g)
    assert float(Lf_eval(f, x1, x2)) == pytest.approx(x2 * float(g.derivative(x1, 2)), rel=1e-12, abs=1e-12)


def test_L_rejects_axis():
    with pytest.raises(DomainError):
        Lf_eval(poly_x2([0, 1]), 0.0, 0.0)


def test_indicator_norm():
    assert lp_norm(Indicator2D(U), 2) == pytest.approx(math.sqrt(3 * math.pi), rel=1e-14)


@pytest.mark.parametrize("p", [1.0, 2.0, 3.5, math.inf])
def test_zero_norm(p):
    assert lp_norm(Zero2D(), p) == 0.0


def test_frame_norm():
    inner = U.shrink(0.1)
    expected = 2 * math.pi * (U.rho_moment() - inner.rho_moment())
    assert lp_norm(Indicator2D(U, inner), 2) ** 2 == pytest.approx(expected, rel=1e-14)


def test_cutoff_norm_against_grid_oracle():
    f = cutoff_field(U, 0.2)
    n = 2000
    x1 = (np.arange(n) + 0.5) / n
    x2 = 1 + (np.arange(n) + 0.5) / n
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    oracle = 2 * math.pi * np.sum(f(X1, X2) ** 2 * X2) / n ** 2
    assert lp_norm(f, 2) ** 2 == pytest.approx(oracle, rel=1e-5)


def test_sup_f_Lf_polynomial():
    f = poly_x2([0, 0, 1], support=U)
    assert sup_f_Lf(f, grid=400, safety=1.0) == pytest.approx(12.0, rel=1e-3)
    assert sup_f_Lf(Zero2D(U)) == 0.0
    assert 0 < sup_f_Lf(cutoff_field(U, 0.3)) < math.inf


def test_identities_on_recipe(recipe, rng):
    u = AxisymField(recipe.f, recipe.v)
    P, _, _ = cyl_points(rng, recipe.rect, 100)
    res = [axisym_identities(u, p) for p in P]
    assert max(r["divergence"] for r in res) < 1e-5
    assert max(r["d3_norm"] for r in res) < 1e-6


def test_laplacian_identity(recipe, rng):
    u = AxisymField(recipe.f)
    r = recipe.rect
    for x1, x2 in zip(rng.uniform(r.a1, r.b1, 25), rng.uniform(r.a2, r.b2, 25)):
        assert axisym_identities(u, (x1, x2, 0.0))["laplacian"] < 1e-5
