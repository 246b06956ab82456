"""Acceptance suite: one test per criterion, each printing a single PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest

from nsiweak import EnergyProfile, Rect, build_cutoff, synthesize
from nsiweak.axisym import AxisymField, axisym_identities
from nsiweak.cantor import (Box3, CantorParams, box_dimension, compose_with_profile, level_boxes,
                            placeholder_params, rescale_tower, switching_schedule, validate_params)
from nsiweak.cutoff import cutoff_field, frame_grid
from nsiweak.energy import almost_constant
from nsiweak.fields import Sum2D
from nsiweak.pressure import PressureEvaluator, pressure_eval, pressure_monte_carlo

U = Rect(0.0, 1.0, 1.0, 2.0)
LINES: list[str] = []


def record(n: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {n} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
    LINES.append(line)
    print(line)


def test_1_cutoff_certification():
    strict = ("f_above_c", "Lf_positive_frame", "Lf_positive_corners", "Lf_positive_frame_certified")
    parts, ok = [], True
    for eta in (0.3, 0.1, 0.05):
        t0 = time.perf_counter()
        cut = build_cutoff(U, eta, 1.0)
        dt = time.perf_counter() - t0
        worst = min(cut.report[name].margin for name in strict)
        good = cut.report.passed and worst > 0 and dt < 10.0
        ok &= good
        parts.append(f"eta={eta} min strict margin {worst:.3g}, {dt:.1f} s")
    record(1, "cutoff certification", ok, "; ".join(parts))
    assert ok


def test_2_axisymmetric_identities(recipe, rng):
    r = recipe.rect
    u = AxisymField(recipe.f, recipe.v)
    n = 1000
    x1, rho, th = rng.uniform(r.a1, r.b1, n), rng.uniform(r.a2, r.b2, n), rng.uniform(0, 2 * np.pi, n)
    P = np.stack([x1, rho * np.cos(th), rho * np.sin(th)], axis=1)
    res = [axisym_identities(u, p) for p in P]
    div = max(d["divergence"] for d in res)
    d3 = max(d["d3_norm"] for d in res)

    u0 = AxisymField(recipe.f)
    Q = np.stack([rng.uniform(r.a1, r.b1, 200), rng.uniform(r.a2, r.b2, 200), np.zeros(200)], axis=1)
    lap = max(axisym_identities(u0, q)["laplacian"] for q in Q)

    # the reduced pressure depends on (x1, rho) only; rho(x2, +h) = rho(x2, -h)
    swirl = AxisymField(cutoff_field(U, 0.2))
    pe = PressureEvaluator(swirl)
    h = 1e-3
    dp = max(abs(pressure_eval(pe, a, math.hypot(b, h)) - pressure_eval(pe, a, math.hypot(b, -h))) / (2 * h)
             for a, b in [(0.3, 1.2), (0.5, 1.5), (0.8, 1.9)])
    ok = div < 1e-5 and lap < 1e-5 and d3 < 1e-4 and dp < 1e-4
    record(2, "axisymmetric identities", ok,
           f"div {div:.2e}, laplacian {lap:.2e}, d3|u| {d3:.2e}, d3 p* {dp:.2e}")
    assert ok


def test_3_pressure_reduction():
    swirl = AxisymField(cutoff_field(U, 0.2))
    pe = PressureEvaluator(swirl)
    rel = []
    for x1, rho in [(0.5, 1.5), (0.2, 1.8), (0.5, 2.5)]:
        exact = pressure_eval(pe, x1, rho)
        est, _ = pressure_monte_carlo(swirl, (x1, rho, 0.0), samples=10_000_000, seed=0)
        rel.append(abs(est - exact) / abs(exact))
    other = cutoff_field(Rect(1.5, 2.5, 1.0, 2.0), 0.25)
    both = PressureEvaluator(AxisymField(Sum2D(swirl.f, other)))
    single = PressureEvaluator(AxisymField(other))
    add = max(abs(pressure_eval(both, a, b) - pressure_eval(pe, a, b) - pressure_eval(single, a, b))
              for a, b in [(0.5, 1.5), (1.2, 1.7), (2.0, 2.5)])
    ok = max(rel) < 0.01 and add < 1e-5
    record(3, "pressure reduction", ok, f"max relative MC gap {max(rel):.2e}, additivity {add:.2e}")
    assert ok


def test_4_linear_profile_run():
    t0 = time.perf_counter()
    res = synthesize(U, 0.1, 1.0, EnergyProfile.linear(1.0, 0.0), nsi_samples=500, seed=0)
    dt = time.perf_counter() - t0
    rep = res.report
    dev = float(res.energy["deviation"].max())
    nsi = max(rep[f"nsi_nu={k}"].detail["max_residual"] for k in ("0", "nu0/2", "nu0"))
    comb = rep["combination_all_switches"].margin
    ends = rep["E_endpoints"].detail["max_rel_error"]
    ok = (len(res.energy["deviation"]) >= 100 and dev <= 0.1 and nsi <= 1e-8 and comb >= 0
          and ends <= 1e-12 and dt < 300 and rep.passed)
    record(4, "linear profile run", ok,
           f"deviation {dev:.4f}, max NSI residual {nsi + 0.0:.2e}, combination margin {comb:.3g}, "
           f"endpoint error {ends:.1e}, {dt:.0f} s")
    assert ok


def test_5_p4_and_jump_profile():
    eps = 0.1
    r4 = synthesize(U, eps, 1.0, EnergyProfile.linear(1.0, 0.0), p=4.0, nsi_samples=100)
    jump = EnergyProfile.from_samples([0, 0.5, 0.5, 1], [1, 0.7, 0.3, 0])
    rj = synthesize(U, eps, 1.0, jump, nsi_samples=100)
    d4, dj = float(r4.energy["deviation"].max()), float(rj.energy["deviation"].max())
    ok = d4 <= eps and dj <= eps and r4.report.passed and rj.report.passed
    record(5, "p = 4 and jump profile", ok, f"deviation p=4 {d4:.4f}, jump {dj:.4f}")
    assert ok


def test_6_almost_constant(recipe):
    u = almost_constant(recipe, 0.05, 2.0)
    X1, X2 = frame_grid(recipe.rect, 80, recipe.band)
    exact = bool(np.array_equal(u.f_jet(X1, X2, 0.0), recipe.f.jet(X1, X2)))
    dev = float(u.deviation_table(np.linspace(0.0, 2.0, 50), ps=(1.0, 2.0, math.inf)).max())
    fin = almost_constant(recipe, 0.05, 2.0, mode="final")
    Y1, Y2 = frame_grid(recipe.rect, 150, recipe.band)
    dom = float((fin.value(Y1, Y2, 2.0) - recipe.f(Y1, Y2)).min())
    ok = exact and dev <= 0.05 and dom >= 0 and fin.report.passed
    record(6, "almost-constant solutions", ok,
           f"initial condition exact {exact}, max deviation {dev:.2e}, domination margin {dom:.3g}")
    assert ok


def test_7_cantor_suite(base):
    t0 = time.perf_counter()
    p = CantorParams("1/3", 2, "3/5", (0, 0, 0), "2/3", Box3((0, -1, -1), (1, 1, 1)))
    val = validate_params(p)
    levels = all(level_boxes(p, j).report.passed for j in range(7))
    times, T0 = switching_schedule(1, p.tau, 6)
    sched = all(T0 - t == p.tau ** (2 * j) / (1 - p.tau ** 2) for j, t in enumerate(times))
    fit = box_dimension(level_boxes(p, 8, check_params=False).boxes, [p.tau ** k for k in range(1, 9)])
    dim_gap = abs(fit.dimension - math.log(2) / math.log(3))
    tw = rescale_tower(base, placeholder_params(), j_max=2)
    pt = rescale_tower(base, CantorParams("1/2", 1, "1/2", (0, 0, 0), "1/2", Box3((0, -1, -1), (1, 1, 1))),
                       j_max=2, ps=(2.0,))
    lp = max(tw.report["lp_scaling"].detail["max_rel_error"], pt.report["lp_scaling"].detail["max_rel_error"])
    dt = time.perf_counter() - t0
    ok = val.passed and levels and sched and dim_gap <= 0.05 and lp <= 1e-6 and dt < 60
    record(7, "Cantor suite", ok,
           f"params {val.passed}, levels 0..6 {levels}, schedule {sched}, dimension {fit.dimension:.4f} "
           f"(gap {dim_gap:.1e}), Lp scaling {lp:.1e}, {dt:.0f} s")
    assert ok


def test_8_composition_plan(base):
    tw = rescale_tower(base, placeholder_params(), j_max=1)
    W = Box3((-1, -1, -1), (2, 1, 1))
    plan = compose_with_profile(EnergyProfile.linear(1.0, 0.0), tw, W, 0.2, 1.0)
    rep = plan.report
    order = plan.T_prime < plan.T_dprime < plan.T
    lam_err = rep["lambda_scaling"].detail["rel_error"]
    splice = rep["splice_combination"].margin
    ok = order and lam_err <= 1e-10 and splice >= 0
    record(8, "composition plan", ok,
           f"T'={plan.T_prime:.10g} < T''={plan.T_dprime:.10g} < T={plan.T}, lambda scaling {lam_err:.1e}, "
           f"splice margin {splice:.3g}")
    assert ok
