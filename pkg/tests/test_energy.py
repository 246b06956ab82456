import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsiweak.cutoff import frame_grid
from nsiweak.energy import (EnergyProfile, LevelPlateau, almost_constant, calibrate, detect_jumps,
                            plan_stages, smooth_profile, synthesize)
from nsiweak.errors import PreconditionError
from nsiweak.fields import Rect

U = Rect(0.0, 1.0, 1.0, 2.0)


def test_smoothing_constant_square_scheme():
    sp, zeta = smooth_profile(EnergyProfile.constant(1.0), 0.4, 1.0, scheme="square")
    ts = np.linspace(0, 1, 11)
    assert zeta == pytest.approx(0.1)
    assert np.allclose(sp(ts), np.sqrt(1.2 - 0.1 * ts), rtol=1e-12)


def test_smoothing_zero_profile():
    eps = 0.3
    sp, _ = smooth_profile(EnergyProfile.constant(0.0), eps, 1.0, scheme="square")
    ts = np.linspace(0, 1, 11)
    assert np.allclose(sp(ts), np.sqrt(eps / 2 - eps * ts / 4), rtol=1e-12)
    assert np.all(sp(ts) > 0)


@pytest.mark.parametrize("p", [2.0, 4.0])
def test_smoothing_sandwich(p):
    e = EnergyProfile.linear(1.0, 0.0)
    sp, zeta = smooth_profile(e, 0.2, 1.0, p=p)
    assert sp.report.passed
    ts = np.linspace(0, 1, 1000)
    assert np.all(e(ts) <= sp(ts) + 1e-15) and np.all(sp(ts) <= e(ts) + 0.2 + 1e-15)
    assert zeta == pytest.approx(0.2 ** p / 4)


def test_square_smoothing_overshoots_at_the_end():
    # the eps/2 lift is on e^2, so at e(T) = 0 the smoothed value is sqrt(eps/4) > eps
    sp, _ = smooth_profile(EnergyProfile.linear(1.0, 0.0), 0.2, 1.0, scheme="square")
    assert not sp.report["smoothed_below_e_plus_eps"].passed
    assert sp.report["smoothed_above_e"].passed
    assert float(sp(1.0)) > 0.2  # about sqrt(0.05) plus the mollified e^2 near t = 1


def test_detect_jump():
    e = EnergyProfile.from_samples([0, 0.5, 0.5, 1], [1, 0.7, 0.3, 0])
    jumps = detect_jumps(e, 0.1)
    assert len(jumps) == 1 and jumps[0].t == pytest.approx(0.5)


def test_plan_stage_count():
    plan = plan_stages(lambda t: np.sqrt(np.maximum(1 - t / 2, 0)), 0.5, 0.5, t_max=2.0)
    assert plan.K == 5
    assert plan.P_start[-1] == pytest.approx(0.75 ** 4)


def test_plan_linear_times():
    plan = plan_stages(lambda t: np.sqrt(np.maximum(1 - t / 2, 0)), 0.5, math.sqrt(0.19), t_max=2.0)
    assert plan.times[1] == pytest.approx(0.38, abs=1e-11)
    assert plan.times[2] == pytest.approx(2 * (1 - 0.81 ** 2), abs=1e-11)


@settings(max_examples=15, deadline=None)
@given(c1=st.floats(0.2, 0.6), c2=st.floats(0.2, 0.6))
def test_plan_monotone_in_c(c1, c2):
    e = lambda t: np.sqrt(np.maximum(1 - t / 2, 0))
    lo, hi = sorted((c1, c2))
    assert plan_stages(e, 0.3, hi, t_max=2.0).K <= plan_stages(e, 0.3, lo, t_max=2.0).K


def test_plan_needs_decay():
    with pytest.raises(PreconditionError):
        plan_stages(lambda t: 1.0 + 0 * t, 0.5, 0.5, t_max=1.0)


def test_calibrate_mu():
    plan = plan_stages(lambda t: np.sqrt(np.maximum(1 - t / 2, 0)), 0.5, 0.5, t_max=2.0)
    cal = calibrate(U, plan, 0.25, 0.1, plateau=LevelPlateau())
    assert cal.mu == pytest.approx(1 / math.sqrt(3 * math.pi), rel=1e-12)
    assert cal.frame_p <= cal.frame_bound


def test_linear_run_certificates(linear_run):
    rep = linear_run.report
    assert rep.passed, rep.first_failure()
    assert rep["E_endpoints"].margin >= 0
    assert linear_run.energy["deviation"].max() <= 0.1


def test_linear_run_endpoint_values(linear_run):
    plan, cal = linear_run.plan, linear_run.calibration
    stages = [s for s in linear_run.solution.stages if hasattr(s, "E_power")]
    assert cal.A[0] == pytest.approx(cal.mu ** 2, rel=1e-14)
    for s, k in zip(stages, range(plan.K)):
        target = (1 - plan.cp) ** k * cal.mu ** 2 * s.N_phi
        assert s.E_power(plan.times[k]) == pytest.approx(target, rel=1e-12)
        assert s.E_power(plan.times[k + 1]) == pytest.approx((1 - plan.cp) * s.E_power(plan.times[k]), rel=1e-12)


def test_zero_profile_gives_zero_solution():
    res = synthesize(U, 0.1, 1.0, EnergyProfile.constant(0.0), nsi_samples=20)
    assert res.constants["K"] == 0
    assert res.energy["deviation"].max() == 0.0


@pytest.mark.parametrize("spec", ["linear:1,0", "const:0.5"])
def test_profile_parse(spec):
    e = EnergyProfile.parse(spec, 1.0)
    e.validate()
    assert float(e(0.0)) in (1.0, 0.5)


@pytest.mark.parametrize("spec", ["linear:0,1", "const:-1", "cubic:1", "linear:a,b"])
def test_profile_parse_rejects(spec):
    with pytest.raises(PreconditionError):
        EnergyProfile.parse(spec, 1.0).validate()


def test_almost_constant_initial(recipe):
    u = almost_constant(recipe, 0.05, 2.0)
    X1, X2 = frame_grid(recipe.rect, 80, recipe.band)
    assert np.array_equal(u.f_jet(X1, X2, 0.0), recipe.f.jet(X1, X2))
    dev = u.deviation_table(np.linspace(0, 2, 50))
    assert dev.max() <= 0.05


def test_almost_constant_final_dominates(recipe):
    u = almost_constant(recipe, 0.05, 2.0, mode="final")
    X1, X2 = frame_grid(recipe.rect, 150, recipe.band)
    gap = u.value(X1, X2, 2.0) - recipe.f(X1, X2)
    assert gap.min() >= 0
    assert u.report.passed


def test_almost_constant_closed_form_norm(recipe):
    u = almost_constant(recipe, 0.05, 2.0)
    direct = super(type(u), u).norm_power(1.3, 2.0)
    assert u.norm_power(1.3, 2.0) == pytest.approx(direct, rel=1e-7)
