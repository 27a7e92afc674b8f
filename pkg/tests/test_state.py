import numpy as np
import pytest
from hypothesis import given, strategies as st_

from npc.errors import NonConvergence
from npc.harness import admissible_control, manufacture_problem, stability_family, time_self_convergence
from npc.nonlocal_ops import KernelSpec, NonlocalOperator
from npc.physics import PotentialSpec
from npc.state import (InitialData, SolverConfig, neumann_compatibility, solve_state, stability_probe,
                       state_residual)

from conftest import default_init, make_st


def test_constant_steady_state():
    st = make_st(15, 32)
    man = manufacture_problem("steady", st, PotentialSpec(), None)
    p = man.problem
    tr = solve_state(st, p.pot, p.B, man.u_star, p.init)
    assert np.abs(tr.rho - p.targets.rho_Q).max() <= 1e-10
    assert np.abs(tr.mu - p.targets.mu_Q).max() <= 1e-10


def test_decoupled_heat_equation_against_dense_backward_euler():
    st = make_st(31, 40)
    g0 = 0.25
    pot = PotentialSpec(g_kind="constant", g0=g0)
    B = NonlocalOperator(KernelSpec(kind="zero"), st)
    x = st.grid.x
    init = InitialData(np.full_like(x, 0.5), 1.0 + np.cos(np.pi * x))
    tr = solve_state(st, pot, B, st.zeros(), init)
    # independent dense oracle: (1 + 2 g0)(m - m_old)/tau - L m = 0
    L = st.grid.laplacian.toarray()
    A = (1 + 2 * g0) / st.tau * np.eye(len(x)) - L
    m = init.mu0.copy()
    for n in range(st.nt):
        m = np.linalg.solve(A, (1 + 2 * g0) / st.tau * m)
        assert np.abs(tr.mu[n + 1] - m).max() <= 1e-10
    assert np.abs(tr.rho - 0.5).max() <= 1e-12


def test_bounds_on_admissible_controls(reference, rng):
    st, pot, B, init = reference
    for _ in range(3):
        tr = solve_state(st, pot, B, admissible_control(st, rng), init)
        assert tr.rho.min() > 1e-4 and tr.rho.max() < 1 - 1e-4
        assert tr.mu.min() >= -1e-10
        assert tr.bounds_ok and not tr.clamp_fired.any()


def test_residual_is_independent(reference, rng):
    st, pot, B, init = reference
    u = admissible_control(st, rng)
    tr = solve_state(st, pot, B, u, init)
    assert state_residual(st, pot, B, u, tr)["max"] <= 1e-10
    noisy = type(tr)(st, tr.rho + 1e-3 * rng.standard_normal(st.shape), tr.mu)
    assert state_residual(st, pot, B, u, noisy)["max"] > 1e-10


def test_zero_fields_residual_equals_control(oracle, rng):
    st, pot, B, init = oracle
    u = 1.0 + 0.1 * rng.random(st.shape)
    zero = type(solve_state(st, pot, B, u, init))(st, st.zeros(), st.zeros())
    res = state_residual(st, pot, B, u, zero)
    expect = np.sqrt(u[1:] ** 2 @ st.grid.quad_weights)
    np.testing.assert_allclose(res["mu"], expect, rtol=1e-14)


def test_neumann_compatibility(reference, rng):
    st, pot, B, init = reference
    u = admissible_control(st, rng)
    tr = solve_state(st, pot, B, u, init)
    assert np.abs(neumann_compatibility(st, pot, u, tr)).max() <= 1e-10 * st.grid.volume


def test_first_order_in_time():
    st = make_st(63, 32)
    pot = PotentialSpec()

    def u_fn(s):
        return 1.0 + 0.5 * np.cos(np.pi * s.grid.x)[None, :] * np.sin(np.pi * s.times)[:, None]

    _, ratios = time_self_convergence(st, pot, lambda s: NonlocalOperator(KernelSpec(), s), u_fn,
                                      default_init(st))
    assert np.all((ratios >= 1.6) & (ratios <= 2.4))


def test_determinism(oracle, rng):
    st, pot, B, init = oracle
    u = admissible_control(st, rng)
    a, b = solve_state(st, pot, B, u, init), solve_state(st, pot, B, u.copy(), init)
    assert np.array_equal(a.rho, b.rho) and np.array_equal(a.mu, b.mu)


def test_stability_degenerate_pair(oracle, rng):
    st, pot, B, init = oracle
    u = admissible_control(st, rng)
    rep = stability_probe(st, pot, B, u, u, init)
    assert rep.degenerate and not rep.bounded


def test_stability_ratios_agree_across_delta():
    st = make_st(31, 64)
    ratios, bounded = stability_family(st, PotentialSpec(), NonlocalOperator(KernelSpec(), st),
                                       default_init(st), np.random.default_rng(5), pairs=2)
    assert bounded
    for row in ratios:
        assert row.max() / row.min() <= 2.0


def test_invalid_inputs(oracle):
    st, pot, B, init = oracle
    with pytest.raises(ValueError):
        solve_state(st, pot, B, st.zeros(), InitialData(np.full(8, 1.2), np.ones(8)))
    with pytest.raises(ValueError):
        solve_state(st, pot, B, st.zeros(), InitialData(np.full(8, 0.5), -np.ones(8)))
    with pytest.raises(ValueError):
        solve_state(st, pot, B, np.full(st.shape, np.inf), init)
    with pytest.raises(ValueError):
        solve_state(st, pot, B, np.zeros((3, 3)), init)


def test_newton_budget_exhaustion(reference, rng):
    st, pot, B, init = reference
    with pytest.raises(NonConvergence) as exc:
        solve_state(st, pot, B, admissible_control(st, rng), init, SolverConfig(max_newton_iters=1))
    assert exc.value.step == 0


@given(st_.integers(0, 2**32 - 1), st_.floats(0.0, 3.0))
def test_nonnegative_controls_keep_bounds(seed, scale):
    st = make_st(15, 32)
    rng = np.random.default_rng(seed)
    u = scale * rng.random(st.shape)
    tr = solve_state(st, PotentialSpec(), NonlocalOperator(KernelSpec(), st), u, default_init(st))
    assert 0 < tr.rho.min() and tr.rho.max() < 1 and tr.mu.min() >= -1e-10
