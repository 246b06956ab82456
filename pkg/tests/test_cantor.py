import math
from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nsiweak.cantor import (Box3, CantorParams, MultiIndex, apply_map, box_dimension, cantor_points,
                            compose_betas, compose_with_profile, level_boxes, map_box, placeholder_params,
                            rational, rescale_tower, switching_schedule, validate_params)
from nsiweak.energy import EnergyProfile
from nsiweak.errors import PreconditionError


def params(**kw):
    base = dict(tau="1/3", M=2, xi="3/5", z=(0, 0, 0), X="2/3", G=Box3((0, -1, -1), (1, 1, 1)))
    base.update(kw)
    return CantorParams(**base)


def test_rational_reads_decimal_strings():
    assert rational(0.7) == Fr(7, 10)
    assert rational("1/3") == Fr(1, 3)


@pytest.mark.parametrize("xi, valid", [("0.6", True), ("0.7", False)])
def test_validate_xi(xi, valid):
    rep = validate_params(params(xi=xi))
    assert rep.passed is valid
    assert rep["tau_xi_M"].passed is valid
    # 2 * 3^-xi straddles 1 between 0.6 and 0.7
    assert (2 * 3 ** -float(Fr(xi)) >= 1) is valid


def test_validate_tau_M():
    rep = validate_params(params(tau="1/2", xi="1/2", X="1/2"))
    assert not rep["tau_M"].passed


def test_identity_map():
    p = params()
    m0 = MultiIndex()
    assert apply_map(p, m0, Fr(2, 7)) == Fr(2, 7)
    assert apply_map(p, m0, (Fr(1, 2), Fr(1, 3), 0)) == (Fr(1, 2), Fr(1, 3), 0)


def test_apply_map_level_two():
    p = params()
    m = MultiIndex((1, 2))
    assert apply_map(p, m, Fr(0)) == Fr(2, 9)
    assert apply_map(p, m, Fr(1)) == Fr(1, 3)


@settings(max_examples=40)
@given(entries=st.lists(st.integers(1, 2), max_size=5), num=st.integers(-20, 20))
def test_apply_map_matches_composition_oracle(entries, num):
    p = params()
    m = MultiIndex(tuple(entries))
    x = Fr(num, 7)
    assert apply_map(p, m, x) == compose_betas(p, m, x)


@pytest.mark.parametrize("j", [0, 1, 3])
def test_box_image_scale(j):
    p = params()
    m = MultiIndex((1,) * j)
    img = map_box(p, m, p.G)
    assert all(s == g * p.tau ** j for s, g in zip(img.sides, p.G.sides))


def test_level_zero_is_G():
    L = level_boxes(params(), 0)
    assert L.boxes == [params().G]


def test_level_two():
    p = params()
    L1, L2 = level_boxes(p, 1), level_boxes(p, 2)
    assert len(L2.boxes) == 4 and L2.report.passed
    for i, a in enumerate(L2.boxes):
        assert any(parent.contains(a) for parent in L1.boxes)
        assert all(a.disjoint(b) for b in L2.boxes[i + 1:])


def test_levels_to_six_exact():
    p = params()
    for j in range(7):
        L = level_boxes(p, j)
        assert len(L.boxes) == 2 ** j and L.report.passed
        assert all(isinstance(c, Fr) for b in L.boxes for c in b.lo + b.hi)


def test_schedule_half():
    times, T0 = switching_schedule(1, "1/2", 3)
    assert times == [0, 1, Fr(5, 4), Fr(21, 16)]
    assert T0 == Fr(4, 3)


def test_schedule_tau_zero():
    times, T0 = switching_schedule(1, 0, 4)
    assert times[1:] == [1, 1, 1, 1] and T0 == 1


@settings(max_examples=30)
@given(num=st.integers(1, 9), T=st.integers(1, 5), j=st.integers(0, 8))
def test_schedule_identity(num, T, j):
    tau = Fr(num, 10)
    times, T0 = switching_schedule(T, tau, j)
    assert all(T0 - t == T * tau ** (2 * k) / (1 - tau ** 2) for k, t in enumerate(times))


@pytest.mark.parametrize("tau, M, X, expected", [("1/3", 2, "2/3", math.log(2) / math.log(3)),
                                                 ("1/4", 3, "3/8", math.log(3) / math.log(4))])
def test_box_dimension_ifs(tau, M, X, expected):
    p = params(tau=tau, M=M, X=X, xi="1/2")
    L = level_boxes(p, 8, check_params=False)
    fit = box_dimension(L.boxes, [p.tau ** k for k in range(1, 9)])
    assert abs(fit.dimension - expected) < 0.05
    pts = box_dimension(cantor_points(p, 8), [p.tau ** k for k in range(1, 9)])
    assert abs(pts.dimension - expected) < 0.05


def test_box_dimension_known_sets(rng):
    solid = box_dimension([Box3((0, 0, 0), (1, 1, 1))], [Fr(1, 2 ** k) for k in range(1, 9)])
    assert abs(solid.dimension - 3) < 0.05
    seg = rng.uniform(0, 1, (200_000, 1)) * np.array([[1.0, 0.0, 0.0]])
    assert abs(box_dimension(seg, [2.0 ** -k for k in range(1, 9)]).dimension - 1) < 0.05


def test_box_dimension_needs_scales():
    with pytest.raises(PreconditionError):
        box_dimension([Box3((0, 0, 0), (1, 1, 1))], [Fr(1, 2), Fr(1, 4), Fr(1, 8)])


def test_tower_report(tower):
    assert tower.report.passed, tower.report.first_failure()
    assert tower.report["lp_scaling"].margin > 0


def test_tower_level_zero_is_base(tower, base):
    u0 = tower.level(0)
    X1 = np.linspace(0.05, 0.95, 11)
    X2 = np.linspace(0.55, 0.95, 11)
    for t in (0.0, 0.5):
        assert np.allclose(u0.f_jet(X1, X2, t), base.f_jet(X1, X2, t), rtol=1e-14, atol=0)


def test_tower_summands_disjoint(tower):
    for j in range(3):
        boxes = tower.support_boxes(j)
        assert len(boxes) == 2 ** j
        assert all(a.disjoint(b) for i, a in enumerate(boxes) for b in boxes[i + 1:])


def test_point_tower_l2_scaling(base):
    p = CantorParams("1/2", 1, "1/2", (0, 0, 0), "1/2", Box3((0, -1, -1), (1, 1, 1)))
    tw = rescale_tower(base, p, j_max=2, ps=(2.0,))
    assert tw.report.passed
    u2 = tw.level(2)
    t = float(tw.schedule.times[2])
    direct = u2.norm_power(t, 2.0) ** 0.5
    # ||u^(j)||_2 = tau^(j/2) M^(j/2) ||base||_2 with tau = 1/2, M = 1, j = 2
    assert direct == pytest.approx(0.5 * base.norm_power(0.0, 2.0) ** 0.5, rel=1e-6)
    assert tw.norm(t, 2.0) == pytest.approx(direct, rel=1e-6)
    assert tw.norm(tw.T0, 2.0) == 0.0


def test_growth_assumption_is_diagnostic(tower):
    g = tower.assumptions["growth_assumption"]
    assert not g.passed  # the placeholder base is not a blow-up arrangement
    assert tower.report.passed


def test_compose_skips_u2_when_e0_small(tower):
    W = Box3((-1, -1, -1), (2, 1, 1))
    plan = compose_with_profile(EnergyProfile.linear(0.1, 0.0), tower, W, 0.2, 1.0)
    assert plan.T_prime == 0.0 and plan.u2 is None and plan.U2 is None
