import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsiweak.errors import DegenerateInputError, DomainError, EmptySetError
from nsiweak.fields import (Callable2D, Constant1D, Indicator1D, PiecewiseLinear1D, Polynomial1D, Rect,
                            Separable2D, Zero2D, divided_difference, eta_subset, eval_with_partials, jet2_mul,
                            mollify)


def x2_squared():
    return Separable2D(Constant1D(1.0), Polynomial1D([0.0, 0.0, 1.0]))


def fd_partials(fn, x1, x2, h=1e-5):
    return ((fn(x1 + h, x2) - fn(x1 - h, x2)) / (2 * h),
            (fn(x1, x2 + h) - fn(x1, x2 - h)) / (2 * h))


def test_polynomial_partials():
    d = eval_with_partials(x2_squared(), (0.5, 1.5), order=2)
    assert d["value"] == pytest.approx(2.25)
    assert d["d2"] == pytest.approx(3.0)
    assert d["d22"] == pytest.approx(2.0)
    assert d["d1"] == d["d11"] == d["d12"] == 0.0


@pytest.mark.parametrize("order", [0, 1, 2])
def test_zero_field_partials(order):
    d = eval_with_partials(Zero2D(), (0.3, 0.7), order=order)
    assert len(d) == {0: 1, 1: 3, 2: 6}[order]
    assert all(v == 0.0 for v in d.values())


def test_partials_reject_lower_half_plane():
    with pytest.raises(DomainError):
        eval_with_partials(x2_squared(), (0.5, 0.0))


def test_recipe_field_matches_finite_differences(recipe, rng):
    v1 = recipe.v.v1
    c1, c2 = recipe.rect.center
    pts = np.stack([c1 + rng.uniform(-0.5, 0.5, 40), c2 + rng.uniform(-0.5, 0.5, 40)], axis=1)
    for x1, x2 in pts:
        d = eval_with_partials(v1, (x1, x2), order=1)
        fd1, fd2 = fd_partials(v1, x1, x2)
        scale = max(1.0, abs(d["d1"]), abs(d["d2"]))
        assert abs(d["d1"] - fd1) <= 1e-5 * scale
        assert abs(d["d2"] - fd2) <= 1e-5 * scale


@pytest.mark.parametrize("margin, expected", [(0.1, (0.1, 0.9, 1.1, 1.9)), (0.0, (0.0, 1.0, 1.0, 2.0))])
def test_eta_subset(margin, expected):
    assert eta_subset(Rect(0, 1, 1, 2), margin).bounds == pytest.approx(expected)


def test_eta_subset_empty():
    with pytest.raises(EmptySetError):
        eta_subset(Rect(0, 1, 1, 2), 0.6)


@pytest.mark.parametrize("coeffs, pts, expected", [
    ([0, 0, 1], [0, 1, 2], 1.0),
    ([0, 0, 0, 1], [0, 1, 2], 3.0),
    ([0, 0, 0, 1], [1, 2], 7.0),
])
def test_divided_difference(coeffs, pts, expected):
    assert divided_difference(Polynomial1D(coeffs), pts) == pytest.approx(expected)


def test_divided_difference_coincident():
    with pytest.raises(DegenerateInputError):
        divided_difference(Polynomial1D([0, 1]), [1.0, 1.0])


@given(a=st.floats(-3, 3), b=st.floats(-3, 3), c=st.floats(-3, 3))
def test_second_difference_of_quadratic_is_leading_coefficient(a, b, c):
    if min(abs(a - b), abs(b - c), abs(a - c)) < 1e-2:
        return
    assert divided_difference(Polynomial1D([0.3, -1.0, 2.5]), [a, b, c]) == pytest.approx(2.5, rel=1e-8)


@pytest.mark.parametrize("radius", [0.01, 0.3])
def test_mollify_constant(radius):
    m = mollify(Constant1D(2.5), radius)
    assert np.allclose(m(np.linspace(-1, 1, 7)), 2.5)


def test_mollify_linear_is_exact():
    m = mollify(PiecewiseLinear1D([-1.0, 2.0], [2.0, -1.0]), 0.01)
    assert float(m(0.5)) == pytest.approx(0.5, abs=1e-4)


def test_mollify_preserves_monotonicity():
    m = mollify(Indicator1D(0.0, 10.0), 0.2)
    ys = m(np.linspace(-0.5, 0.5, 401))
    assert np.all(np.diff(ys) >= -1e-12)
    assert ys[0] == pytest.approx(0.0, abs=1e-12) and ys[-1] == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=30)
@given(x1=st.floats(-1, 1), x2=st.floats(0.5, 2))
def test_jet_product_rule(x1, x2):
    f = Callable2D(lambda a, b: np.stack([np.sin(a) * b, np.cos(a) * b, np.sin(a), -np.sin(a) * b,
                                          np.cos(a), 0 * a]))
    g = x2_squared()
    prod = jet2_mul(f.jet(x1, x2), g.jet(x1, x2))
    h = 1e-4
    fg = lambda a, b: f(a, b) * g(a, b)
    d11 = (fg(x1 + h, x2) - 2 * fg(x1, x2) + fg(x1 - h, x2)) / h ** 2
    assert prod[0] == pytest.approx(fg(x1, x2), rel=1e-12, abs=1e-14)
    assert prod[3] == pytest.approx(d11, rel=1e-5, abs=1e-5)


def test_rect_rejects_axis():
    with pytest.raises(DomainError):
        Rect(0, 1, 0, 1)
    assert Rect(0, 1, 1, 2).rho_moment() == pytest.approx(1.5)
    assert math.isclose(Rect(0, 2, 1, 3).min_side, 2.0)
