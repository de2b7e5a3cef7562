"""Acceptance criteria, one test per criterion, each with its runtime budget."""
import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import brentq

from semiflow.core import benilan_residual, bracket, crandall_liggett, solve_integral
from semiflow.grid import Geometry, GridFunction, Norm, vector_norm
from semiflow.invariance import (
    ConstraintFunctional, a_derivative, certify_slow, check_pointwise_condition, gradient_derivative,
    perturbation_family,
)
from semiflow.operators import LaplaceOperator, ZeroOperator
from semiflow.oracles import ScalarTrajectory, comparison_check, heat_spectral, perron_max_solution
from semiflow.scenario import check_scenario, load_scenario, run

from conftest import ACCEPTANCE, scalar, sine

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def report(cid, ok, detail):
    ACCEPTANCE[cid] = (bool(ok), detail)
    assert ok, f"{cid}: {detail}"


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def zero_forcing(u):
    return 0 * u


@pytest.fixture(scope="module")
def obstacle_run():
    with Clock() as c:
        rep = run(load_scenario(SCENARIOS / "plaplace_obstacle.ini"), rng=np.random.default_rng(0))
    return rep, c.elapsed


def test_cl1_crandall_liggett_convergence():
    with Clock() as c:
        op = LaplaceOperator.interval(1.0, 201)
        x0 = sine(op.geometry)
        exact = heat_spectral([(1, 1.0)], 1.0, 0.1, op.geometry)
        errs = {n: (crandall_liggett(op, x0, 0.1, n) - exact).norm() for n in (128, 256, 512, 1024)}
    ratios = [errs[n] / errs[2 * n] for n in (128, 256, 512)]
    ok = errs[1024] <= 5e-3 and min(ratios) >= 1.6 and c.elapsed < 10
    report("CL-1", ok, f"err(1024)={errs[1024]:.3e} ratios={[round(r, 3) for r in ratios]} "
                       f"time={c.elapsed:.2f}s")


def test_br1_benilan_residual():
    with Clock() as c:
        op = LaplaceOperator.interval(1.0, 101)
        x1, x2 = sine(op.geometry, 1), sine(op.geometry, 2, 0.5)
        heat = []
        for steps in (100, 200, 400):
            a = solve_integral(op, zero_forcing, x1, 0.1, steps)
            b = solve_integral(op, zero_forcing, x2, 0.1, steps)
            heat.append((0.1 / steps, benilan_residual(a, b)))
        # the heat pair has vanishing forcings, so also check a pair where the residual is nonzero
        zop = ZeroOperator(Geometry.vector(1))
        gap = []
        for steps in (100, 200, 400):
            a = solve_integral(zop, zero_forcing, scalar(1.0), 1.0, steps)
            b = solve_integral(zop, lambda u: -1.0 * u, scalar(1.0), 1.0, steps)
            gap.append((1.0 / steps, benilan_residual(a, b)))
    floor = 1e-14
    ok_heat = all(r <= h + floor for h, r in heat) and all(
        b[1] <= 0.5 * a[1] * 1.1 + floor for a, b in zip(heat, heat[1:]))
    ok_gap = all(r <= h for h, r in gap) and all(b[1] <= 0.55 * a[1] for a, b in zip(gap, gap[1:]))
    ok = ok_heat and ok_gap and c.elapsed < 5
    report("BR-1", ok, f"heat residuals={[r for _, r in heat]} "
                       f"nondegenerate={[f'{r:.3e}' for _, r in gap]} time={c.elapsed:.2f}s")


def _quotient(x, y, h, tag):
    g = Geometry.vector(x.size)
    return (vector_norm(x + h * y, g, tag) - vector_norm(x, g, tag)) / h


def test_sp1_semi_inner_products():
    rng = np.random.default_rng(2024)
    worst = {"subadd": -math.inf, "scale": 0.0, "order": -math.inf, "quotient": 0.0}
    with Clock() as c:
        for tag in (Norm.SUP, Norm.L2):
            for _ in range(1000):
                n = int(rng.integers(1, 9))
                x, y, z = rng.normal(size=(3, n))
                a = rng.uniform(-2, 2)
                X, Y, Z = (GridFunction.vector(v, tag) for v in (x, y, z))
                plus, minus = bracket(X, Y, "plus"), bracket(X, Y, "minus")
                worst["subadd"] = max(worst["subadd"], bracket(X, Y + Z) - plus - bracket(X, Z))
                worst["scale"] = max(worst["scale"], abs(bracket(X, a * X) - a * X.norm()))
                worst["order"] = max(worst["order"], minus - plus)
                worst["quotient"] = max(worst["quotient"], abs(plus - _quotient(x, y, 1e-8, tag)),
                                        abs(minus - _quotient(x, y, -1e-8, tag)))
    ok = (worst["subadd"] <= 1e-12 and worst["scale"] <= 1e-12 and worst["order"] <= 0
          and worst["quotient"] <= 1e-6 and c.elapsed < 1)
    report("SP-1", ok, " ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f" time={c.elapsed:.2f}s")


def test_o1_plaplace_obstacle_invariance(obstacle_run):
    rep, elapsed = obstacle_run
    cond = rep.conditions.find("conditions")
    s = rep.summary
    ok = (cond.passed and rep.pointwise.passed and s["min_u_minus_m"] >= -1e-6
          and s["max_u_minus_M"] <= 1e-6 and rep.first_exit is None and elapsed < 60)
    report("O-1", ok, f"conditions={cond.verdict} min(u-m)={s['min_u_minus_m']:.3e} "
                      f"max(u-M)={s['max_u_minus_M']:.3e} first_exit={rep.first_exit} time={elapsed:.2f}s")


def test_o2_negative_control():
    with Clock() as c:
        rep = run(load_scenario(SCENARIOS / "plaplace_broken.ini"), rng=np.random.default_rng(0))
    mon = rep.monitors["lower"]
    v_exit = float(np.interp(mon.first_exit, mon.times, mon.v_series)) if mon.first_exit is not None else math.nan
    ok = (rep.first_exit is not None and mon.first_exit is not None and v_exit > 1e-8
          and rep.exit_code == 1 and c.elapsed < 60)
    report("O-2", ok, f"first_exit={rep.first_exit} V_m at exit={v_exit:.3e} "
                      f"subsolution={rep.conditions.find('subsolution').verdict} time={c.elapsed:.2f}s")


@pytest.mark.parametrize("name", ["rd_interval", "rd_rectangle"])
def test_rd1_reaction_diffusion(name):
    with Clock() as c:
        sc = load_scenario(SCENARIOS / f"{name}.ini")
        rep = run(sc, rng=np.random.default_rng(0))
        prob, cond, _ = check_scenario(sc, np.random.default_rng(0))
        lam1 = prob.op.lambda1
        structural = []
        for label, obst, sign, make in (("lower", prob.lower, -1, ConstraintFunctional.quad_lower),
                                        ("upper", prob.upper, 1, ConstraintFunctional.quad_upper)):
            L = cond.meta["L"][label]
            fam = perturbation_family(prob.op, obst, sign, sc.check.deltas, per_profile=sc.check.per_profile,
                                      rng=np.random.default_rng(1))
            # omega here has negative slope: the bound is the literal (L - 2 lambda1) V
            chk = check_pointwise_condition(prob.op, prob.source, make(obst), lambda s, C=L - 2 * lam1: C * s,
                                            fam, tol=1e-8, name=f"structure_{label}")
            structural.append(chk)
    s = rep.summary
    interior = prob.op.geometry.shape
    ok = (cond.passed and rep.pointwise.passed and all(r.passed for r in structural)
          and s["min_u_minus_m"] >= -1e-6 and s["max_u_minus_M"] <= 1e-6 and rep.first_exit is None
          and c.elapsed < 120)
    if name == "rd_rectangle":
        ok = ok and tuple(n - 2 for n in interior) == (17, 17)
    line = (f"{name}: conditions={cond.verdict} structure={[r.verdict for r in structural]} "
            f"lambda1={lam1:.4f} min(u-m)={s['min_u_minus_m']:.3e} max(u-M)={s['max_u_minus_M']:.3e} "
            f"time={c.elapsed:.2f}s")
    prev = ACCEPTANCE.get("RD-1")
    if prev is not None:
        ok, line = ok and prev[0], prev[1] + "; " + line
    report("RD-1", ok, line)


def test_a1_age_model():
    with Clock() as c:
        sc = load_scenario(SCENARIOS / "age_structured.ini")
        rep = run(sc, rng=np.random.default_rng(0))
    birth = rep.conditions.find("birth")
    closure = rep.conditions.find("closure_lower")
    max_v = rep.summary["max_V_lower"]
    ok = (birth.passed and closure.passed and rep.conditions.passed and max_v <= 1e-8
          and rep.trajectory.times[-1] == pytest.approx(2.0) and c.elapsed < 30)
    report("A-1", ok, f"birth={birth.verdict} closure={closure.verdict} max V={max_v:.3e} "
                      f"time={c.elapsed:.2f}s")


def _closed_form_events():
    # u' = -0.5 u + 1 from 0.5, reset u -> 0 at t = tau_j(u) = j + 0.1 u^2 / (1 + u^2)
    def tau(j, u):
        return j + 0.1 * u * u / (1 + u * u)

    u1 = lambda t: 2 - 1.5 * math.exp(-0.5 * t)  # noqa: E731
    t1 = brentq(lambda t: tau(1, u1(t)) - t, 1.0, 1.1)
    u2 = lambda t: 2 - 2 * math.exp(-0.5 * (t - t1))  # noqa: E731
    t2 = brentq(lambda t: tau(2, u2(t)) - t, 2.0, 2.1)
    return [t1, t2]


def test_i1_impulsive_barriers():
    with Clock() as c:
        sc = load_scenario(SCENARIOS / "impulsive.ini")
        rep = run(sc, rng=np.random.default_rng(0))
    h = sc.t_final / sc.steps
    exact = _closed_form_events()
    times = [j.time for j in rep.jumps]
    widths = [j.bracket[1] - j.bracket[0] for j in rep.jumps]
    speeds = [rep.conditions.find(f"speed_barrier{j}").passed for j in (1, 2)]
    ok = (rep.conditions.find("barriers").passed and all(speeds) and rep.hit_counts == [1, 1]
          and all(w <= h * 2.0 ** -40 * (1 + 1e-9) for w in widths)
          and all(abs(a - b) <= h for a, b in zip(times, exact)) and len(times) == 2 and c.elapsed < 10)
    report("I-1", ok, f"hit_counts={rep.hit_counts} times={[round(t, 6) for t in times]} "
                      f"closed form={[round(t, 6) for t in exact]} bracket={max(widths):.1e} "
                      f"time={c.elapsed:.2f}s")


def test_sl1_slow_functions():
    with Clock() as c:
        slow = {name: certify_slow(fn, 0.5) for name, fn in
                (("x", lambda x: x), ("x^2", lambda x: x ** 2), ("x*ln(1+x)", lambda x: x * np.log1p(x)))}
        root = certify_slow(np.sqrt, 0.1)
        # monotone in gamma: certified at gamma implies certified at every smaller gamma
        gammas = np.linspace(0.05, 3.0, 60)
        mono = True
        for fn in (lambda x: x, lambda x: x ** 2, np.sqrt, lambda x: 0.7 * x ** 1.5 + 0.9 * x):
            passed = [certify_slow(fn, g).passed for g in gammas]
            mono &= all(a or not b for a, b in zip(passed, passed[1:]))
    ok = (all(r.passed for r in slow.values()) and root.verdict == "violated" and root.witnesses
          and mono and c.elapsed < 1)
    w = root.witnesses[0] if root.witnesses else None
    report("SL-1", ok, f"certified={[k for k, r in slow.items() if r.passed]} sqrt={root.verdict} "
                       f"witness x={w.where if w else None} monotone={mono} time={c.elapsed:.2f}s")


def test_pl1_perron_machinery(obstacle_run):
    rep, _ = obstacle_run
    with Clock() as c:
        sol = perron_max_solution(lambda x: 2 * math.sqrt(x), 0.0, 1.0,
                                  eps_schedule=[10.0 ** -k for k in range(1, 13)])
        t = sol.times
        # constructed pairs: u' <= omega(u) from u(0) <= 0 stays below t^2, u above it does not
        below = comparison_check(ScalarTrajectory(t, 0.81 * t ** 2), None, sol, tol=1e-9)
        above = comparison_check(ScalarTrajectory(t, t ** 2 + 1e-3 * t), None, sol, tol=1e-9)
        omega_c = rep.conditions.find("conditions").meta["omega_C"]
        dominated, top = True, 0.0
        for label, mon in rep.monitors.items():
            xmax = perron_max_solution(lambda x, C=omega_c[label]: C * x, 0.0, float(mon.times[-1]),
                                       eps_schedule=[10.0 ** -k for k in range(1, 13)],
                                       steps=len(mon.times) - 1)
            top = max(top, float(xmax.values.max()))
            dominated &= bool(comparison_check(ScalarTrajectory(mon.times, mon.v_series), None, xmax,
                                               tol=mon.exit_tol))
    ok = abs(sol.final - 1.0) <= 1e-4 and bool(below) and not above and dominated and c.elapsed < 5
    report("PL-1", ok, f"x(1)={sol.final:.8f} pairs=({bool(below)}, {bool(above)}) omega_C={omega_c} "
                       f"max x_max={top:.1e} V dominated={dominated} time={c.elapsed:.2f}s")


def test_pd1_directional_derivative_cross_check():
    rng = np.random.default_rng(11)
    op = LaplaceOperator.interval(1.0, 101)
    w = op.geometry.weights
    V = ConstraintFunctional.custom(lambda u: 0.5 * float(w @ (u.values * u.values)),
                                    lambda u: u.with_values(u.values))
    worst, bad = 0.0, 0
    with Clock() as c:
        for _ in range(50):
            x = op.project(sum(rng.normal() * np.sin(k * np.pi * op.geometry.axis(0)) for k in (1, 2, 3)))
            v = op.project(sum(rng.normal() * np.sin(k * np.pi * op.geometry.axis(0)) for k in (1, 2, 3)))
            est = a_derivative(op, V, x, v)
            err = abs(est.extrapolated - gradient_derivative(op, V, x, v))
            worst = max(worst, err / est.error_bound if est.error_bound > 0 else math.inf)
            bad += err > est.error_bound
    ok = bad == 0 and c.elapsed < 10
    report("PD-1", ok, f"failures={bad}/50 max err/bound={worst:.3e} time={c.elapsed:.2f}s")
