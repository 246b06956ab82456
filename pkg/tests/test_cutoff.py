import math

import numpy as np
import pytest

from nsiweak.axisym import Lf_eval
from nsiweak.cutoff import build_cutoff, build_structure_recipe, default_bump, verify_structure
from nsiweak.errors import PreconditionError
from nsiweak.fields import Rect, Scaled2D

U = Rect(0.0, 1.0, 1.0, 2.0)


@pytest.fixture(scope="module")
def cut03():
    return build_cutoff(U, 0.3, 1.0)


def test_bump_values():
    h = default_bump()
    assert float(h(-1.0)) == 0.0
    assert float(h(0.4)) == pytest.approx(math.exp(-6.25), rel=1e-12)
    assert float(h(2.0)) == pytest.approx(1.0)
    assert h.C_h >= 1.0


def test_bump_C_h_matches_grid_scan():
    h = default_bump()
    xs = np.linspace(-0.5, 1.5, 200_001)
    d = h.derivs(xs, 2)
    assert h.C_h == pytest.approx(1.05 * np.abs(d).max(), rel=1e-4)


def test_cutoff_is_one_inside(cut03):
    assert float(cut03.f(0.5, 1.5)) == pytest.approx(1.0, abs=1e-15)
    inner = U.shrink(0.3 + 1e-9)
    xs, ys = np.meshgrid(np.linspace(inner.a1, inner.b1, 21), np.linspace(inner.a2, inner.b2, 21))
    assert np.allclose(cut03.f(xs, ys), 1.0, atol=1e-15)


def test_cutoff_c_prime_formula(cut03):
    C_h = cut03.bump.C_h
    assert cut03.c_prime == pytest.approx(min(1.0, math.exp(-4.5) / (2 * math.sqrt(C_h))) / 3, rel=1e-14)


def test_cutoff_report_passes(cut03):
    assert cut03.report.passed
    names = {c.name for c in cut03.report.checks}
    assert {"f_equals_one_on_U_eta", "f_in_unit_interval", "f_above_c", "Lf_positive_frame"} <= names
    assert all(c.margin > 0 for c in cut03.report.checks if c.name.startswith("Lf_positive"))


def test_Lf_positive_on_frame_grid(cut03):
    band = cut03.c_prime * cut03.eta
    g = np.linspace(0, 1, 200)
    X1, X2 = np.meshgrid(U.a1 + g * U.width, U.a2 + g * U.height, indexing="ij")
    frame = ~U.shrink(band).contains(X1, X2, closed=True) & U.contains(X1, X2)
    assert np.all(Lf_eval(cut03.f, X1[frame], X2[frame]) > 0)


def test_c_decimal_is_consistent(cut03):
    mant, exp = cut03.diagnostics["c_decimal"].split("e")
    assert math.log(float(mant)) + int(exp) * math.log(10) == pytest.approx(
        cut03.log_c, rel=1e-9)


@pytest.mark.parametrize("eta, a", [(0.6, 1.0), (0.0, 1.0), (0.3, 1.5), (0.3, 0.0)])
def test_cutoff_preconditions(eta, a):
    with pytest.raises(PreconditionError):
        build_cutoff(U, eta, a)


def test_recipe_divergence_free(recipe, rng):
    st = recipe
    c1, c2 = st.rect.center
    x1 = c1 + rng.uniform(-0.9, 0.9, 500)
    x2 = c2 + rng.uniform(-0.9, 0.9, 500)
    assert np.max(np.abs(st.v.div_x2v(x1, x2))) < 1e-6


def test_recipe_f_dominates_v(recipe):
    r = recipe.report
    assert r.passed
    dom = [c for c in r.checks if c.name == "f_exceeds_v"]
    assert dom and all(c.passed for c in dom)


def test_recipe_too_small():
    with pytest.raises(PreconditionError):
        build_structure_recipe(Rect(0.0, 0.1, 1.0, 1.1), 0.05)


@pytest.mark.parametrize("a", [-0.9, -0.3, 0.5, 0.99])
def test_scaled_v_is_still_a_structure(recipe, a):
    assert verify_structure(recipe.scaled_v(a), grid=120).passed


def test_halved_f_fails_domination(recipe):
    rep = verify_structure(recipe.with_f(Scaled2D(recipe.f, 0.5)), grid=120)
    assert not rep.passed
