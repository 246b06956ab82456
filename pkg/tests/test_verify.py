import math

import numpy as np
import pytest

from nsiweak.cutoff import cutoff_field
from nsiweak.energy import almost_constant
from nsiweak.errors import CombinationError, DomainError, PreconditionError
from nsiweak.fields import Rect, Scaled2D
from nsiweak.verify import (PiecewiseSolution, TestFunction, TimeDependentField, ZeroField, combination_check,
                            compute_nu0, concatenate, lei_check, nsi_residual)

U = Rect(0.0, 1.0, 1.0, 2.0)


class Static(TimeDependentField):
    """Time-independent ``u[f]`` on an interval."""

    def __init__(self, f, t0, t1):
        self.f, self.t_start, self.t_end, self.rects = f, t0, t1, tuple(f.supports())

    def profile(self, t):
        return self.f

    def dt_norm_sq(self, x1, x2, t):
        return np.zeros(np.broadcast(np.asarray(x1), np.asarray(x2)).shape)


class FixedSup:
    def sup_f_Lf(self, p=2.0, times=3):
        return 12.0


@pytest.fixture(scope="module")
def slow_decay(recipe):
    return almost_constant(recipe, 0.05, 2.0)


def test_zero_residual():
    assert nsi_residual(ZeroField(0, 1), 0.3, (0.5, 1.5), 0.5) == 0.0


def test_residual_rejects_off_plane():
    with pytest.raises(DomainError):
        nsi_residual(ZeroField(0, 1), 0.0, (0.5, 1.5, 0.1), 0.5)


def test_plateau_residual_is_minus_delta(slow_decay, recipe):
    c = recipe.rect.center
    assert float(recipe.phi(*c)) == 1.0
    for t in (0.1, 1.0, 1.9):
        assert nsi_residual(slow_decay, 0.0, c, t) == pytest.approx(-slow_decay.delta, rel=1e-12)


def test_stage_residual_off_plateau(linear_run, rng):
    sol = linear_run.solution
    nu0 = sol.nu0
    for nu in (0.5 * nu0, nu0):
        t = rng.uniform(0.0, 0.9, 200)
        st = [sol.stage_at(tt) for tt in t]
        pts = np.array([(s.rect.a1 + 0.5 * s.eta, s.rect.center[1]) if hasattr(s, "eta") else (0.5, 1.5)
                        for s in st])
        res = np.array([nsi_residual(sol, nu, p, tt) for p, tt in zip(pts, t)])
        assert res.max() <= 1e-8


def test_lei_zero():
    r = lei_check(ZeroField(0.0, 1.0, (U,)), TestFunction(cutoff_field(U, 0.1)), 0.2, 0.8)
    assert r.slack == 0.0 and r.passed


def test_lei_disjoint_test_function(slow_decay):
    far = Rect(5.0, 6.0, 1.0, 2.0)
    r = lei_check(slow_decay, TestFunction(cutoff_field(far, 0.1)), 0.0, 1.0)
    assert r.slack == 0.0 and r.lhs == 0.0


@pytest.mark.parametrize("nu_frac", [0.0, 1.0])
def test_lei_almost_constant(slow_decay, recipe, nu_frac):
    psi = cutoff_field(recipe.rect, 0.2)
    r = lei_check(slow_decay, TestFunction(psi), 0.0, 2.0, nu=nu_frac * min(slow_decay.nu0, 1e-3),
                  n_time=4, tol=1e-8)
    assert r.passed and r.slack >= 0


def test_combination_identity_and_zero():
    f = cutoff_field(U, 0.2)
    same = combination_check(f, f)
    assert same.passed and same.margin == 0.0
    assert combination_check(f, Scaled2D(f, 0.0)).passed
    assert not combination_check(f, Scaled2D(f, 2.0)).passed


def test_stage_switches_pass(linear_run):
    checks = [c for c in linear_run.report.checks if "switch" in c.name or "combination" in c.name]
    assert checks and all(c.passed and c.margin >= 0 for c in checks)


def test_nu0_formula():
    nu0 = compute_nu0([FixedSup()], 0.1, math.sqrt(3 * math.pi))
    assert nu0 == pytest.approx(0.9 * 0.1 / (4 * 3 * math.pi * 12), rel=1e-12)
    assert nu0 == pytest.approx(1.989e-4, rel=1e-3)


def test_nu0_cap_when_unconstrained():
    assert compute_nu0([ZeroField(0.0, 1.0)], 0.1, 1.0, cap=0.7) == 0.7


def test_concatenate_single_stage():
    s = Static(cutoff_field(U, 0.2), 0.0, 1.0)
    sol = concatenate([s])
    assert isinstance(sol, PiecewiseSolution) and sol.stages == [s]


def test_concatenate_rejects_growth():
    f = cutoff_field(U, 0.2)
    with pytest.raises(CombinationError):
        concatenate([Static(f, 0.0, 1.0), Static(Scaled2D(f, 2.0), 1.0, 2.0)])


def test_concatenate_rejects_gap():
    f = cutoff_field(U, 0.2)
    with pytest.raises(PreconditionError):
        concatenate([Static(f, 0.0, 1.0), Static(f, 1.5, 2.0)])


def test_concatenate_with_zero_tail():
    f = cutoff_field(U, 0.2)
    sol = concatenate([Static(f, 0.0, 1.0), ZeroField(1.0, 2.0, (U,))])
    assert sol.switch_times == [1.0]
    assert sol.stage_at(1.5).norm_power(1.5, 2) == 0.0
