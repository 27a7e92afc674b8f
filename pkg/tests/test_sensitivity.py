import numpy as np
import pytest
from hypothesis import given, strategies as st_

from npc.cost import Betas, Targets, eval_cost
from npc.harness import smooth_field
from npc.nonlocal_ops import KernelSpec, NonlocalOperator
from npc.physics import PotentialSpec
from npc.sensitivity import cost_derivative, linearized_residual, solve_linearized, taylor_test
from npc.state import InitialData, solve_state

from conftest import default_init, make_st

LAMBDAS = [1e-1, 5e-2, 2.5e-2, 1.25e-2]


def _base(oracle, rng):
    st, pot, B, init = oracle
    u = 1.0 + 0.5 * smooth_field(st, rng)
    return u, solve_state(st, pot, B, u, init)


def test_homogeneous_data_gives_zero(oracle, rng):
    _, base = _base(oracle, rng)
    st, pot, B, _ = oracle
    lin = solve_linearized(base, pot, B, st.zeros())
    assert not np.any(lin.xi) and not np.any(lin.eta)


def test_initial_values_exactly_zero(oracle, rng):
    u, base = _base(oracle, rng)
    st, pot, B, _ = oracle
    lin = solve_linearized(base, pot, B, smooth_field(st, rng))
    assert not np.any(lin.xi[0]) and not np.any(lin.eta[0])


def test_decoupled_against_dense_oracle(rng):
    st = make_st(15, 24)
    g0 = 0.4
    pot = PotentialSpec(g_kind="constant", g0=g0)
    B = NonlocalOperator(KernelSpec(kind="zero"), st)
    base = solve_state(st, pot, B, st.zeros(), default_init(st))
    h = smooth_field(st, rng)
    lin = solve_linearized(base, pot, B, h)
    assert not np.any(lin.xi)
    A = (1 + 2 * g0) / st.tau * np.eye(st.grid.node_count) - st.grid.laplacian.toarray()
    eta = np.zeros(st.grid.node_count)
    for n in range(st.nt):
        eta = np.linalg.solve(A, (1 + 2 * g0) / st.tau * eta + h[n + 1])
        assert np.abs(lin.eta[n + 1] - eta).max() <= 1e-10


def test_scaling(oracle, rng):
    _, base = _base(oracle, rng)
    st, pot, B, _ = oracle
    h = smooth_field(st, rng)
    a, b = solve_linearized(base, pot, B, h), solve_linearized(base, pot, B, 2 * h)
    assert np.abs(b.xi - 2 * a.xi).max() <= 1e-11 * np.abs(b.xi).max()
    assert np.abs(b.eta - 2 * a.eta).max() <= 1e-11 * np.abs(b.eta).max()


@given(st_.integers(0, 2**32 - 1))
def test_superposition(seed):
    st = make_st(7, 16)
    pot, B = PotentialSpec(smooth=True), NonlocalOperator(KernelSpec(kind="time_history"), st)
    rng = np.random.default_rng(seed)
    base = solve_state(st, pot, B, 1.0 + 0.5 * smooth_field(st, rng), default_init(st))
    h1, h2 = rng.standard_normal((2, *st.shape))
    a, b, c = (solve_linearized(base, pot, B, h) for h in (h1, h2, h1 + h2))
    assert np.abs(a.xi + b.xi - c.xi).max() <= 1e-10
    assert np.abs(a.eta + b.eta - c.eta).max() <= 1e-10
    assert linearized_residual(base, pot, B, h1, a) <= 1e-10


def test_taylor_first_order_smooth(oracle, rng):
    st, pot, B, init = oracle
    u = 1.0 + 0.5 * smooth_field(st, rng)
    tab = taylor_test(st, pot, B, u, smooth_field(st, rng), LAMBDAS, init)
    assert tab.strictly_decreasing
    assert np.all((tab.ratios >= 1.5) & (tab.ratios <= 3.0))
    assert 0 < tab.scheme_mismatch < 1e-1


def test_taylor_log_potential_decreases(reference, rng):
    st, pot, B, init = reference
    u = 1.0 + 0.5 * smooth_field(st, rng)
    tab = taylor_test(st, pot, B, u, smooth_field(st, rng), LAMBDAS[:3], init)
    assert tab.strictly_decreasing


def test_taylor_degenerate_direction(oracle):
    st, pot, B, init = oracle
    tab = taylor_test(st, pot, B, np.ones(st.shape), st.zeros(), LAMBDAS, init)
    assert tab.degenerate


def test_cost_derivative_matches_fd(oracle, rng):
    st, pot, B, init = oracle
    u = 1.0 + 0.5 * smooth_field(st, rng)
    h = smooth_field(st, rng)
    targets = Targets(np.full(st.shape, 0.45), np.full(st.shape, 0.7))
    betas = Betas(1.0, 0.5, 0.1)
    base = solve_state(st, pot, B, u, init)
    d = cost_derivative(base, solve_linearized(base, pot, B, h), u, h, targets, betas)

    def J(v):
        tr = solve_state(st, pot, B, v, init)
        return eval_cost(st, tr.rho, tr.mu, v, targets, betas)

    lam = 1e-4
    fd = (J(u + lam * h) - J(u - lam * h)) / (2 * lam)
    assert d == pytest.approx(fd, rel=1e-4)
