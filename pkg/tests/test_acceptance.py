"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test prints one ``[PASS]``/``[FAIL]`` line (visible without ``-s``)
before asserting.
"""
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from npc.config import build_problem, load
from npc.cost import Betas, Targets
from npc.harness import (admissible_control, gradient_check, laplacian_errors, nonlocal_duality_error,
                         projection_battery, smooth_field, stability_family, time_self_convergence)
from npc.nonlocal_ops import KernelSpec, NonlocalOperator
from npc.optimizer import (ControlConstraints, ControlProblem, H1TimeMetric, OptConfig, project_Uad,
                           projected_gradient)
from npc.oracles import kkt_projection
from npc.physics import PotentialSpec
from npc.sensitivity import taylor_test
from npc.state import solve_state

from conftest import default_init, make_st

ROOT = Path(__file__).resolve().parents[1]


def _emit(capsys, number, title, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}")


def test_criterion_1_maximum_principle(capsys, reference):
    st, pot, B, init = reference
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    controls = [st.zeros(), np.full(st.shape, 3.0)] + [admissible_control(st, rng) for _ in range(18)]
    margin, min_mu, fired = np.inf, np.inf, False
    for u in controls:
        tr = solve_state(st, pot, B, u, init)
        margin = min(margin, tr.rho.min(), 1.0 - tr.rho.max())
        min_mu = min(min_mu, tr.mu.min())
        fired |= bool(tr.clamp_fired.any())
    elapsed = time.perf_counter() - t0
    ok = margin >= 1e-4 and min_mu >= -1e-10 and not fired and elapsed <= 60
    _emit(capsys, 1, "maximum principle", ok,
          f"{len(controls)} controls, rho margin {margin:.4f}, min mu {min_mu:.3e}, {elapsed:.1f}s")
    assert len(controls) == 20
    assert margin >= 1e-4 and min_mu >= -1e-10 and not fired
    assert elapsed <= 60


def _gradient_problem(cells, nt):
    st = make_st(cells, nt)
    x, t = st.grid.x, st.times[:, None]
    targets = Targets(0.55 + 0.1 * np.cos(2 * np.pi * x) + 0 * t, 0.6 + 0.2 * np.cos(np.pi * x) * t)
    return ControlProblem(st, PotentialSpec(smooth=True), NonlocalOperator(KernelSpec(), st), default_init(st),
                          targets, Betas(1.0, 1.0, 0.1), ControlConstraints.on(st))


def _fields(st, seed, count):
    """Smooth control and directions defined by continuous formulas, so refinement sees the same data."""
    rng = np.random.default_rng(seed)
    x, t = st.grid.x[None, :], st.times[:, None]
    u = 1.0 + 0.3 * np.cos(np.pi * x) * np.sin(np.pi * t)
    dirs = []
    for _ in range(count):
        c = rng.standard_normal((3, 3))
        dirs.append(sum(c[i, j] * np.cos(i * np.pi * x) * np.cos(j * np.pi * t)
                        for i in range(3) for j in range(3)))
    return u, dirs


def test_criterion_2_adjoint_gradient(capsys):
    t0 = time.perf_counter()
    errors = []
    for cells, nt in ((7, 16), (15, 32)):
        prob = _gradient_problem(cells, nt)
        u, dirs = _fields(prob.st, 202, 10)
        errs, _ = gradient_check(prob, u, dirs)
        errors.append(errs.max())
    elapsed = time.perf_counter() - t0
    shrink = errors[0] / errors[1]
    ok = errors[0] <= 1e-3 and shrink >= 2.0 and elapsed <= 120
    _emit(capsys, 2, "adjoint gradient check", ok,
          f"max rel error {errors[0]:.3e} (refined {errors[1]:.3e}, shrink x{shrink:.2f}), {elapsed:.1f}s")
    assert errors[0] <= 1e-3
    assert shrink >= 2.0
    assert elapsed <= 120


def test_criterion_3_taylor(capsys, reference):
    st, _, B, init = reference
    pot = PotentialSpec(smooth=True)
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    u = 1.0 + 0.5 * smooth_field(st, rng)
    tab = taylor_test(st, pot, B, u, smooth_field(st, rng), [1e-1, 5e-2, 2.5e-2, 1.25e-2], init)
    elapsed = time.perf_counter() - t0
    in_band = bool(np.all((tab.ratios >= 1.5) & (tab.ratios <= 3.0)))
    ok = tab.strictly_decreasing and in_band and elapsed <= 90
    _emit(capsys, 3, "Taylor remainder", ok,
          "ratios " + ", ".join(f"{r:.3f}" for r in tab.ratios) + f", {elapsed:.1f}s")
    assert tab.strictly_decreasing and in_band
    assert elapsed <= 90


def test_criterion_4_stability(capsys, reference):
    st, pot, B, init = reference
    t0 = time.perf_counter()
    ratios, bounded = stability_family(st, pot, B, init, np.random.default_rng(404), pairs=5,
                                       deltas=(1e-1, 1e-2, 1e-3))
    elapsed = time.perf_counter() - t0
    spread = ratios.max() / ratios.min()
    ok = bounded and spread <= 3.0 and elapsed <= 90
    _emit(capsys, 4, "stability probe", ok,
          f"ratios in [{ratios.min():.4f}, {ratios.max():.4f}], variation x{spread:.3f}, {elapsed:.1f}s")
    assert bounded and np.all(np.isfinite(ratios))
    assert spread <= 3.0
    assert elapsed <= 90


def test_criterion_5_duality(capsys):
    st = make_st(15, 8)
    rng = np.random.default_rng(505)
    t0 = time.perf_counter()
    errs = {kind: nonlocal_duality_error(NonlocalOperator(KernelSpec(kind=kind), st), st, rng, 100)
            for kind in ("spatial_convolution", "time_history")}
    B = NonlocalOperator(KernelSpec(), st)
    sym = 0.0
    for _ in range(100):
        q, base = rng.standard_normal((2, *st.shape))
        sym = max(sym, np.abs(B.apply_DB_adjoint(base, q) - B.apply_DB(base, q)).max())
    elapsed = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-11 and sym <= 1e-12 and elapsed <= 10
    _emit(capsys, 5, "nonlocal duality", ok,
          ", ".join(f"{k} {v:.2e}" for k, v in errs.items()) + f", DB*-DB {sym:.2e}, {elapsed:.2f}s")
    assert max(errs.values()) <= 1e-11
    assert sym <= 1e-12
    assert elapsed <= 10


def _binding_instance(rng):
    """Three-step single-node instance whose exact projection has both the ball and the box active."""
    while True:
        m = H1TimeMetric(rng.uniform(0.1, 0.5), 2, np.array([rng.uniform(0.5, 2.0)]))
        z = rng.normal(0.5, 1.0, (3, 1))
        u_max = rng.uniform(0.3, 1.5)
        R = rng.uniform(0.3, 0.9) * max(m.norm(np.clip(z, 0, u_max)), 1e-3)
        v = kkt_projection(z, m, u_max, R)
        box_active = np.any(np.isclose(v, 0.0, atol=1e-12) | np.isclose(v, u_max, atol=1e-12))
        if box_active and abs(m.norm(v) - R) <= 1e-10 * R:
            return z, m, u_max, R, v


def test_criterion_6_projection(capsys):
    rng = np.random.default_rng(606)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(50):
        z, m, u_max, R, v = _binding_instance(rng)
        worst = max(worst, float(np.abs(project_Uad(z, ControlConstraints(m, u_max, R)) - v).max()))
    batteries = []
    for cells, nt, pairs in ((7, 16, 100), (63, 128, 10)):
        st = make_st(cells, nt)
        metric = H1TimeMetric.from_grid(st)
        cons = ControlConstraints(metric, 2.0, 0.5 * metric.norm(np.full(st.shape, 2.0)))
        batteries.append(projection_battery(cons, rng, pairs))
    idem = max(b[0] for b in batteries)
    lip = max(b[1] for b in batteries)
    infeasible = sum(b[2] for b in batteries)
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and idem <= 2e-12 and lip <= 1 + 1e-10 and infeasible == 0 and elapsed <= 30
    _emit(capsys, 6, "projection", ok,
          f"KKT max error {worst:.2e} over 50 binding inputs, idempotence {idem:.1e}, "
          f"Lipschitz {lip:.3f}, {elapsed:.1f}s")
    assert worst <= 1e-8
    assert idem <= 2e-12 and lip <= 1 + 1e-10 and infeasible == 0
    assert elapsed <= 30


@pytest.mark.slow
def test_criterion_7_tracking(capsys):
    prob = build_problem(load(ROOT / "configs" / "tracking.json"), ROOT / "configs").control
    st = prob.st
    assert prob.betas.beta3 == 0.0 and st.grid.node_count == 64 and st.nt == 128
    t0 = time.perf_counter()
    run = projected_gradient(prob, st.zeros(), OptConfig(max_iters=500, stat_tol=0.0))
    elapsed = time.perf_counter() - t0
    J = np.array(run.cost_history)
    reduction = J[0] / J.min()
    mono = bool(np.all(np.diff(J) <= 0))
    ok = reduction >= 1e6 and mono and run.iterations <= 500 and elapsed <= 600
    _emit(capsys, 7, "manufactured tracking", ok,
          f"J {J[0]:.3e} -> {J.min():.3e} (x{reduction:.2e}) in {run.iterations} iterations, "
          f"nonincreasing {mono}, {elapsed:.0f}s")
    assert reduction >= 1e6
    assert mono and run.iterations <= 500
    assert elapsed <= 600


def test_criterion_8_convergence(capsys, reference):
    st, pot, _, init = reference
    t0 = time.perf_counter()
    coarse = replace(st, nt=32)

    def u_fn(s):
        return 1.0 + 0.5 * np.cos(np.pi * s.grid.x)[None, :] * np.sin(np.pi * s.times)[:, None]

    _, t_ratios = time_self_convergence(coarse, pot, lambda s: NonlocalOperator(KernelSpec(), s), u_fn, init,
                                        levels=5)
    _, x_ratios = laplacian_errors()
    elapsed = time.perf_counter() - t0
    t_ok = bool(np.all((t_ratios >= 1.6) & (t_ratios <= 2.4)))
    x_ok = bool(np.all((x_ratios >= 3.5) & (x_ratios <= 4.5)))
    ok = t_ok and x_ok and elapsed <= 120
    _emit(capsys, 8, "scheme convergence", ok,
          "time ratios " + ", ".join(f"{r:.3f}" for r in t_ratios)
          + "; Laplacian ratios " + ", ".join(f"{r:.3f}" for r in x_ratios) + f", {elapsed:.1f}s")
    assert t_ok and x_ok
    assert elapsed <= 120
