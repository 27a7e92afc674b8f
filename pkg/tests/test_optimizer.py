import numpy as np
import pytest
from hypothesis import given, strategies as st_

from npc.cost import Betas, Targets, eval_cost
from npc.errors import NonConvergence
from npc.grid import norm_h1_time
from npc.harness import kkt_battery, manufacture_problem, projection_battery, smooth_field
from npc.nonlocal_ops import KernelSpec, NonlocalOperator
from npc.optimizer import (ControlConstraints, ControlProblem, H1TimeMetric, OptConfig, ProjectionConfig,
                           project_ball, project_box, project_Uad, projected_gradient, stationarity)
from npc.oracles import kkt_projection
from npc.physics import PotentialSpec

from conftest import default_init, make_st


def test_cost_examples():
    st = make_st(7, 8)
    t = Targets(np.full(st.shape, 0.3), np.full(st.shape, 0.6))
    assert eval_cost(st, t.rho_Q, t.mu_Q, st.zeros(), t, Betas(1, 1, 0)) == 0.0
    assert eval_cost(st, t.rho_Q, t.mu_Q, np.ones(st.shape), t, Betas(0, 0, 2)) == pytest.approx(1.0)
    u = np.random.default_rng(0).random(st.shape)
    b = Betas(1, 1, 0.5)
    assert eval_cost(st, t.rho_Q, t.mu_Q, 2 * u, t, b) == pytest.approx(4 * eval_cost(st, t.rho_Q, t.mu_Q, u, t, b))
    with pytest.raises(ValueError):
        Betas(0, 0, 0)
    with pytest.raises(ValueError):
        Betas(-1, 1, 0)


def test_metric_matches_grid_norm(rng):
    st = make_st(7, 16)
    m = H1TimeMetric.from_grid(st)
    u = rng.standard_normal(st.shape)
    assert m.norm(u) == pytest.approx(norm_h1_time(st, u), rel=1e-13)
    assert m.l2_norm(u) == pytest.approx(st.norm(u), rel=1e-13)
    G = rng.standard_normal(st.shape)
    # the Riesz representative reproduces the L2 pairing in the H1 inner product
    assert m.inner(m.riesz(G), u) == pytest.approx(m.l2_inner(G, u), rel=1e-10)


def test_feasible_input_unchanged(rng):
    st = make_st(7, 16)
    cons = ControlConstraints.on(st, 2.0, 100.0)
    u = 2.0 * rng.random(st.shape)
    assert np.abs(project_Uad(u, cons) - u).max() <= 1e-14


def test_box_dominates():
    st = make_st(7, 16)
    cons = ControlConstraints.on(st, 1.0, 1e6)
    assert not np.any(project_Uad(-np.ones(st.shape), cons))


def test_ball_is_radial_scaling(rng):
    st = make_st(7, 8)
    cons = ControlConstraints.on(st, None, 0.5)
    u = 1.0 + rng.random(st.shape)
    v = project_Uad(u, cons)
    np.testing.assert_allclose(v, project_ball(u, cons))
    assert cons.metric.norm(v) == pytest.approx(0.5)
    np.testing.assert_allclose(v / u, (v / u).flat[0])


def test_box_projection_against_oracle(rng):
    for _ in range(20):
        m = H1TimeMetric(rng.uniform(0.1, 0.5), 2, np.array([rng.uniform(0.5, 2.0)]))
        z = rng.normal(0.5, 1.0, (3, 1))
        cons = ControlConstraints(m, 1.0, None)
        np.testing.assert_allclose(project_box(z, cons), kkt_projection(z, m, 1.0, None), atol=1e-10)


def test_dykstra_against_kkt_oracle(rng):
    assert kkt_battery(rng, 50) <= 1e-8


def test_spatially_varying_bound(rng):
    m = H1TimeMetric(0.25, 2, np.array([0.7, 1.3]))
    u_max = np.array([[0.5, 1.0], [0.8, 0.2], [1.0, 0.6]])
    for _ in range(10):
        z = rng.normal(0.5, 1.0, (3, 2))
        R = 0.5 * m.norm(np.clip(z, 0, u_max)) + 1e-3
        v = project_Uad(z, ControlConstraints(m, u_max, R))
        np.testing.assert_allclose(v, kkt_projection(z, m, u_max, R), atol=1e-8)


def test_pgs_and_pdas_agree(rng):
    st = make_st(5, 12)
    cons = ControlConstraints.on(st, 1.0, None)
    z = 0.5 + 1.5 * rng.standard_normal(st.shape)
    a = project_box(z, cons, ProjectionConfig(box_method="pdas"))
    b = project_box(z, cons, ProjectionConfig(box_method="pgs"))
    assert np.abs(a - b).max() <= 1e-9


def test_l2_heuristic_is_feasible_not_exact(rng):
    st = make_st(7, 16)
    cons = ControlConstraints.on(st, 1.0, 0.4)
    z = 0.5 + rng.standard_normal(st.shape)
    h = project_Uad(z, cons, ProjectionConfig(l2_heuristic=True))
    exact = project_Uad(z, cons)
    assert cons.feasible(h)
    m = cons.metric
    assert m.norm(z - exact) <= m.norm(z - h) + 1e-12


def test_dykstra_budget(rng):
    st = make_st(7, 16)
    cons = ControlConstraints.on(st, 1.0, 0.3)
    z = 0.5 + 2.0 * rng.standard_normal(st.shape)
    with pytest.raises(NonConvergence):
        project_Uad(z, cons, ProjectionConfig(max_dykstra_iters=1))


def test_constraint_validation():
    st = make_st(7, 8)
    with pytest.raises(ValueError):
        ControlConstraints.on(st, -1.0, None)
    with pytest.raises(ValueError):
        ControlConstraints.on(st, 1.0, 0.0)
    with pytest.raises(ValueError):
        ControlConstraints.on(st, np.ones((2, 2)), None)
    with pytest.raises(ValueError):
        project_Uad(np.zeros((2, 2)), ControlConstraints.on(st, 1.0, None))


@given(st_.integers(0, 2**32 - 1), st_.floats(0.2, 3.0), st_.floats(0.05, 2.0))
def test_projection_properties(seed, u_max, r_frac):
    st = make_st(5, 8)
    m = H1TimeMetric.from_grid(st)
    cons = ControlConstraints(m, u_max, r_frac * m.norm(np.full(st.shape, u_max)))
    idem, lip, infeasible = projection_battery(cons, np.random.default_rng(seed), pairs=5)
    assert idem <= 2e-12
    assert lip <= 1 + 1e-10
    assert infeasible == 0


def test_stationarity_cases(rng):
    st = make_st(7, 16)
    cons = ControlConstraints.on(st, 2.0, None)
    u = np.ones(st.shape)
    assert stationarity(u, st.zeros(), cons) == 0.0
    G = 0.1 * smooth_field(st, rng)
    l2 = OptConfig(gradient_metric="l2")
    assert stationarity(u, G, cons, l2) == pytest.approx(st.norm(G), rel=1e-12)
    top = np.full(st.shape, 2.0)
    assert stationarity(top, -np.abs(G) - 0.1, cons) == 0.0
    assert stationarity(st.zeros(), np.abs(G) + 0.1, cons) <= 1e-14


def _small_problem(st, betas, targets=None, u_max=3.0, R=None):
    pot = PotentialSpec()
    B = NonlocalOperator(KernelSpec(), st)
    init = default_init(st)
    targets = targets or Targets(np.full(st.shape, 0.5), np.full(st.shape, 0.5))
    return ControlProblem(st, pot, B, init, targets, betas, ControlConstraints.on(st, u_max, R))


def test_pure_control_cost_converges_to_zero():
    st = make_st(7, 16)
    prob = _small_problem(st, Betas(0.0, 0.0, 1.0))
    run = projected_gradient(prob, np.full(st.shape, 1.5), OptConfig(max_iters=200, stat_tol=1e-12))
    assert run.exit_reason == "tol"
    assert st.norm(run.u) <= 1e-10
    assert np.all(np.diff(run.cost_history) <= 0)


def test_infeasible_start_rejected():
    st = make_st(7, 16)
    prob = _small_problem(st, Betas(1.0, 1.0, 0.0), u_max=1.0)
    with pytest.raises(ValueError):
        projected_gradient(prob, np.full(st.shape, 2.0))


def test_manufactured_tracking_small(tmp_path):
    st = make_st(15, 32)
    man = manufacture_problem("tracking", st, PotentialSpec(), NonlocalOperator(KernelSpec(), st), seed=3,
                              init=default_init(st))
    assert man.problem.cost(man.u_star)[0] == 0.0
    run = projected_gradient(man.problem, st.zeros(), OptConfig(max_iters=150, stat_tol=0.0))
    J = np.array(run.cost_history)
    assert J[0] / J.min() >= 1e6
    assert np.all(np.diff(J) <= 0)
    assert all(man.problem.cons.feasible(v) for v in run.iterates)
    path = tmp_path / "hist.csv"
    run.to_csv(path)
    rows = path.read_text().splitlines()
    assert rows[0] == "iter,J,stationarity,step,norm_l2,norm_h1"
    assert len(rows) == run.iterations + 2


def test_fixed_point_at_minimizer():
    st = make_st(7, 16)
    man = manufacture_problem("tracking", st, PotentialSpec(), NonlocalOperator(KernelSpec(), st), seed=1,
                              init=default_init(st))
    run = projected_gradient(man.problem, man.u_star, OptConfig(max_iters=1, stat_tol=-1.0))
    assert np.abs(run.u - man.u_star).max() <= 1e-12


def test_ball_active_construction():
    st = make_st(7, 16)
    man = manufacture_problem("ball_active", st, PotentialSpec(), NonlocalOperator(KernelSpec(), st), seed=2,
                              init=default_init(st))
    cons = man.problem.cons
    assert cons.metric.norm(man.u_star) == pytest.approx(1.2 * cons.R, rel=1e-14)


def test_variational_inequality_sampling():
    st = make_st(7, 16)
    B = NonlocalOperator(KernelSpec(), st)
    man = manufacture_problem("ball_active", st, PotentialSpec(smooth=True), B, seed=4, init=default_init(st),
                              betas=Betas(1.0, 1.0, 1e-2), u_max=1.2)
    prob = man.problem
    run = projected_gradient(prob, project_Uad(man.u_star, prob.cons), OptConfig(max_iters=400, stat_tol=1e-11))
    u = run.u
    G, _ = prob.gradient(u)
    rng = np.random.default_rng(0)
    for _ in range(300):
        v = project_Uad(u + rng.uniform(0.01, 2.0) * smooth_field(st, rng, 4), prob.cons)
        d = v - u
        if np.any(d):
            assert st.inner(G, d) >= -1e-6 * st.norm(G) * st.norm(d)


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptConfig(gradient_metric="h2")
    with pytest.raises(ValueError):
        OptConfig(step_rule="newton")
    with pytest.raises(ValueError):
        OptConfig(backtrack=1.5)
