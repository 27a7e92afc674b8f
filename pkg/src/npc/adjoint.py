"""Backward adjoint solver and the reduced cost gradient.

Two discretizations of the adjoint system are provided.

``scheme="consistent"`` (default) is backward Euler applied to the
conservative form

    -((1 + 2g) p)_t + g' rho_t p - L p - g' q = beta2 (mu - mu_Q)
    -q_t - (mu g' p)_t + (2 g' mu_t + mu g'' rho_t) p + (F'' - mu g'') q + DB* q = beta1 (rho - rho_Q)

with every coefficient taken at exactly the level the forward step used.
With that placement the scheme is the transpose of the linearized forward
stepping, so the gradient it yields is the exact gradient of the discrete
cost.  The multiplier of step ``n -> n+1`` is stored at node n, hence
``p[nt] = q[nt] = 0``.

``scheme="otd"`` is the direct node-wise backward Euler discretization of
the non-conservative form.  It converges to the same continuous adjoint but
its gradient differs from the discrete one by O(tau).

``dense_discrete_gradient`` is an independent reference: it transposes the
complex-step Jacobian of the full discrete forward map.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import physics as ph
from .cost import Betas, Targets
from .errors import LinearSolveFailure
from .linalg import BlockSolveError, solve_block
from .state import InitialData, SolverConfig, StateTrajectory, solve_state, step_residuals

SCHEMES = ("consistent", "otd")


@dataclass
class AdjointPair:
    p: np.ndarray
    q: np.ndarray
    p_control: np.ndarray  # L^2(Q) representative of p acting on controls
    scheme: str = "consistent"


def _step_coefficients(base: StateTrajectory, pot):
    """Coefficients of the linearized forward step n -> n+1, padded with a zero step."""
    st = base.st
    tau = st.tau
    r0, r1 = base.rho[:-1], base.rho[1:]
    m0, m1 = base.mu[:-1], base.mu[1:]
    g1 = ph.g_prime(pot, r0)
    g2 = ph.g_second(pot, r0)
    co = dict(
        a=1.0 + 2.0 * ph.g_eval(pot, r0),
        d=g1 * (r1 - r0) / tau,
        k=g1,
        e=m1 * g1,
        c=2.0 * g1 * (m1 - m0) / tau + m1 * g2 * (r1 - r0) / tau,
        l=m1 * g2,
        f=ph.F_second(pot, r1),
    )
    zero = np.zeros((1, st.grid.node_count))
    return {k: np.vstack([v, zero]) for k, v in co.items()}


def _solve_consistent(base, pot, B, src_p, src_q):
    st = base.st
    tau = st.tau
    wt = st.time_weights
    co = _step_coefficients(base, pot)
    p, q = st.zeros(), st.zeros()
    q_hat = st.zeros()  # q rescaled so the weighted adjoint of B gives the plain sum
    for n in range(st.nt - 1, -1, -1):
        k1 = n + 1
        dbt = (wt[k1] / tau) * B.adjoint_at(base.rho, q_hat, k1)
        s = wt[k1] / tau
        r1 = s * src_p[k1] + co["a"][k1] / tau * p[k1]
        r2 = (s * src_q[k1] + q[k1] / tau + co["l"][k1] * q[k1]
              + (co["e"][k1] / tau - co["c"][k1]) * p[k1] - dbt)
        try:
            p[n], q[n] = solve_block(st.grid, co["a"][n] / tau + co["d"][n], -co["k"][n],
                                     co["e"][n] / tau, 1.0 / tau + co["f"][n], r1, r2)
        except BlockSolveError as exc:
            raise LinearSolveFailure(str(exc), n) from exc
        q_hat[n] = q[n] * tau / wt[n]
    p_control = st.zeros()
    p_control[1:] = (tau / wt[1:, None]) * p[:-1]
    return p, q, p_control


def _node_coefficients(base: StateTrajectory, pot):
    st = base.st
    tau = st.tau
    rho, mu = base.rho, base.mu
    lag = np.concatenate([[0], np.arange(st.nt)])  # forward step feeding level m
    rl = rho[lag]
    return dict(
        a=1.0 + 2.0 * ph.g_eval(pot, rl),
        g1=ph.g_prime(pot, rl),
        g2=ph.g_second(pot, rl),
        rho_t=(rho[lag + 1] - rl) / tau,
        mu_t=(mu[lag + 1] - mu[lag]) / tau,
        f2=ph.F_second(pot, rho),
    )


def _solve_otd(base, pot, B, src_p, src_q):
    st = base.st
    tau = st.tau
    co = _node_coefficients(base, pot)
    p, q = st.zeros(), st.zeros()
    for m in range(st.nt - 1, -1, -1):
        a, g1, g2, rt, mt, f2 = (co[k][m] for k in ("a", "g1", "g2", "rho_t", "mu_t", "f2"))
        mb = base.mu[m]
        hist = B.adjoint_at(base.rho, q, m + 1)
        r1 = src_p[m] + a / tau * p[m + 1]
        r2 = src_q[m] + q[m + 1] / tau + g1 * mb / tau * p[m + 1] - hist
        try:
            p[m], q[m] = solve_block(st.grid, a / tau - g1 * rt, -g1,
                                     g1 * (mt + mb / tau), 1.0 / tau + f2 - mb * g2, r1, r2)
        except BlockSolveError as exc:
            raise LinearSolveFailure(str(exc), m) from exc
    return p, q, p.copy()


def solve_adjoint(base: StateTrajectory, pot: ph.PotentialSpec, B, targets: Targets,
                  betas: Betas, cfg: SolverConfig = SolverConfig(),
                  scheme: str = "consistent") -> AdjointPair:
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    st = base.st
    st.check(targets.rho_Q, targets.mu_Q)
    src_p = betas.beta2 * (base.mu - targets.mu_Q)
    src_q = betas.beta1 * (base.rho - targets.rho_Q)
    if not (np.any(src_p) or np.any(src_q)):
        return AdjointPair(st.zeros(), st.zeros(), st.zeros(), scheme)
    solver = _solve_consistent if scheme == "consistent" else _solve_otd
    p, q, pc = solver(base, pot, B, src_p, src_q)
    return AdjointPair(p, q, pc, scheme)


def adjoint_residual(base: StateTrajectory, pot, B, targets: Targets, betas: Betas,
                     adj: AdjointPair) -> float:
    """Max weighted residual of the consistent scheme, recomputed in vectorised form."""
    st = base.st
    tau = st.tau
    wt = st.time_weights
    co = _step_coefficients(base, pot)
    p, q = adj.p, adj.q
    src_p = betas.beta2 * (base.mu - targets.mu_Q)
    src_q = betas.beta1 * (base.rho - targets.rho_Q)
    # transpose of B applied to the multipliers, as a whole trajectory
    dbt = (wt[:, None] / tau) * B.apply_DB_adjoint(base.rho, q * tau / wt[:, None])
    n, k1 = slice(0, st.nt), slice(1, st.nt + 1)
    lap = (st.grid.laplacian @ p[n].T).T
    R1 = ((co["a"][n] / tau + co["d"][n]) * p[n] - lap - co["k"][n] * q[n]
          - (wt[k1, None] / tau) * src_p[k1] - co["a"][k1] / tau * p[k1])
    R2 = ((1 / tau + co["f"][n]) * q[n] + co["e"][n] / tau * p[n]
          - (wt[k1, None] / tau) * src_q[k1] - q[k1] / tau - co["l"][k1] * q[k1]
          - (co["e"][k1] / tau - co["c"][k1]) * p[k1] + dbt[k1])
    w = st.grid.quad_weights
    return float(np.sqrt(np.sum(w * (R1**2 + R2**2), axis=1)).max())


def gradient(u: np.ndarray, p: np.ndarray, beta3: float) -> np.ndarray:
    """L^2(Q) gradient of the reduced cost, ``p + beta3 u``.

    Pass ``AdjointPair.p_control`` as p.
    """
    if np.shape(u) != np.shape(p):
        raise ValueError("control and adjoint shapes differ")
    return p + beta3 * u


def reduced_gradient(st, pot, B, u, init: InitialData, targets: Targets, betas: Betas,
                     cfg: SolverConfig = SolverConfig(), scheme: str = "consistent"):
    """Forward solve, adjoint solve and gradient; returns (traj, adjoint, G)."""
    traj = solve_state(st, pot, B, u, init, cfg)
    adj = solve_adjoint(traj, pot, B, targets, betas, cfg, scheme)
    return traj, adj, gradient(u, adj.p_control, betas.beta3)


def _complex_step_jacobian(st, pot, B, u, rho, mu, h=1e-30) -> np.ndarray:
    nt, N = st.nt, st.grid.node_count
    n_unk = 2 * nt * N
    J = np.empty((n_unk, n_unk))
    X = np.concatenate([rho[1:].ravel(), mu[1:].ravel()]).astype(complex)
    for j in range(n_unk):
        Xc = X.copy()
        Xc[j] += 1j * h
        r = np.vstack([rho[:1], Xc[: nt * N].reshape(nt, N)])
        m = np.vstack([mu[:1], Xc[nt * N:].reshape(nt, N)])
        R1, R2 = step_residuals(st, pot, B, u, r, m)
        J[:, j] = np.concatenate([R1.ravel(), R2.ravel()]).imag / h
    return J


def dense_discrete_gradient(st, pot, B, u, init: InitialData, targets: Targets, betas: Betas,
                            cfg: SolverConfig = SolverConfig()) -> np.ndarray:
    """Exact L^2(Q) representative of the gradient of the discrete reduced cost.

    Smooth potentials only (complex step); limited to 2 * nt * N <= 1100 unknowns.
    """
    if not pot.smooth:
        raise ValueError("the dense oracle needs a smooth potential")
    nt, N = st.nt, st.grid.node_count
    if 2 * nt * N > 1100:
        raise ValueError("instance too large for the dense oracle")
    traj = solve_state(st, pot, B, u, init, cfg)
    J = _complex_step_jacobian(st, pot, B, u, traj.rho, traj.mu)
    wt = st.time_weights[:, None] * st.grid.quad_weights[None, :]
    dJ_drho = (betas.beta1 * wt * (traj.rho - targets.rho_Q))[1:].ravel()
    dJ_dmu = (betas.beta2 * wt * (traj.mu - targets.mu_Q))[1:].ravel()
    lam = np.linalg.solve(J.T, np.concatenate([dJ_drho, dJ_dmu]))
    # R1 of step n contains -u^{n+1}
    dJ_du = betas.beta3 * wt * u
    dJ_du[1:] += lam[: nt * N].reshape(nt, N)
    return dJ_du / wt
