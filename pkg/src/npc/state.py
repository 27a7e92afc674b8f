"""Forward solver for the controlled state system.

One step ``n -> n+1`` solves, by damped Newton on the pair (rho, mu),

    (1 + 2 g(rho^n)) (mu - mu^n)/tau + mu g'(rho^n) (rho - rho^n)/tau - L mu = u^{n+1}
    (rho - rho^n)/tau + B[rho]^n + F'(rho) = mu g'(rho^n)

Coefficients of g are lagged at level n, the nonlocal term is explicit
(history up to and including level n), F' is implicit.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import physics as ph
from .errors import NonConvergence
from .grid import SpaceTimeGrid, norm_h1_time, norm_linf_time_h1
from .linalg import solve_block

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    newton_tol: float = 1e-10
    max_newton_iters: int = 30
    max_halvings: int = 30
    sign_tol: float = 1e-10
    lin_tol: float = 1e-10
    adj_tol: float = 1e-10


@dataclass
class InitialData:
    rho0: np.ndarray
    mu0: np.ndarray

    def validate(self, node_count: int) -> None:
        for name, f in (("rho0", self.rho0), ("mu0", self.mu0)):
            if np.shape(f) != (node_count,):
                raise ValueError(f"{name} has shape {np.shape(f)}, expected ({node_count},)")
            if not np.all(np.isfinite(f)):
                raise ValueError(f"{name} is not finite")
        if not (np.min(self.rho0) > 0 and np.max(self.rho0) < 1):
            raise ValueError("rho0 must lie strictly inside (0, 1)")
        if np.min(self.mu0) < 0:
            raise ValueError("mu0 must be nonnegative")


@dataclass
class StateTrajectory:
    st: SpaceTimeGrid
    rho: np.ndarray
    mu: np.ndarray
    newton_iters: np.ndarray = field(default=None)
    residuals: np.ndarray = field(default=None)
    clamp_fired: np.ndarray = field(default=None)
    bound_violation: np.ndarray = field(default=None)

    @property
    def rho_t(self) -> np.ndarray:
        return np.diff(self.rho, axis=0) / self.st.tau

    @property
    def mu_t(self) -> np.ndarray:
        return np.diff(self.mu, axis=0) / self.st.tau

    @property
    def bounds_ok(self) -> bool:
        return not np.any(self.bound_violation)


def step_residuals(st: SpaceTimeGrid, pot: ph.PotentialSpec, B, u, rho, mu):
    """Residuals of both stepping equations for every step, shape ``(nt, N)`` each.

    Works on complex input in smooth mode, which the complex-step oracle uses.
    """
    tau = st.tau
    L = st.grid.laplacian
    r0, r1 = rho[:-1], rho[1:]
    m0, m1 = mu[:-1], mu[1:]
    a = 1.0 + 2.0 * ph.g_eval(pot, r0)
    g1 = ph.g_prime(pot, r0)
    hist = B.apply(rho)[:-1]
    lap = (L @ m1.T).T
    R1 = a * (m1 - m0) / tau + m1 * g1 * (r1 - r0) / tau - lap - u[1:]
    R2 = (r1 - r0) / tau + hist + ph.F_prime(pot, r1) - m1 * g1
    return R1, R2


def state_residual(st: SpaceTimeGrid, pot, B, u, traj: StateTrajectory) -> dict:
    """Independent re-evaluation of the stepping equations; weighted L^2 norms per step."""
    st.check(u, traj.rho, traj.mu)
    R1, R2 = step_residuals(st, pot, B, u, traj.rho, traj.mu)
    w = st.grid.quad_weights
    r_mu = np.sqrt(np.sum(w * R1 * R1, axis=1))
    r_rho = np.sqrt(np.sum(w * R2 * R2, axis=1))
    total = np.sqrt(r_mu**2 + r_rho**2)
    return {"mu": r_mu, "rho": r_rho, "total": total, "max": float(total.max())}


def solve_state(st: SpaceTimeGrid, pot: ph.PotentialSpec, B, u: np.ndarray,
                init: InitialData, cfg: SolverConfig = SolverConfig()) -> StateTrajectory:
    grid = st.grid
    st.check(u)
    init.validate(grid.node_count)
    if not np.all(np.isfinite(u)):
        raise ValueError("control is not finite")
    tau = st.tau
    L = grid.laplacian
    w = grid.quad_weights
    rho = st.zeros()
    mu = st.zeros()
    rho[0], mu[0] = init.rho0, init.mu0
    iters = np.zeros(st.nt, dtype=int)
    res = np.zeros(st.nt)
    fired = np.zeros(st.nt, dtype=bool)

    for n in range(st.nt):
        rn, mn = rho[n], mu[n]
        a = 1.0 + 2.0 * ph.g_eval(pot, rn)
        g1 = ph.g_prime(pot, rn)
        hist = B.apply_at(rho, n)
        un = u[n + 1]

        def residual(r, m):
            R1 = a * (m - mn) / tau + m * g1 * (r - rn) / tau - L @ m - un
            R2 = (r - rn) / tau + hist + ph.F_prime(pot, r) - m * g1
            return R1, R2, float(np.sqrt(np.sum(w * (R1 * R1 + R2 * R2))))

        r, m = rn.copy(), mn.copy()
        R1, R2, nrm = residual(r, m)
        k = 0
        while nrm > cfg.newton_tol:
            if k >= cfg.max_newton_iters:
                raise NonConvergence(f"Newton failed at step {n}: residual {nrm:.3e}", n, nrm)
            # unknown order (mu, rho): the Laplacian acts on mu
            dm, dr = solve_block(grid,
                                 a / tau + g1 * (r - rn) / tau, m * g1 / tau,
                                 -g1, 1.0 / tau + ph.F_second(pot, r),
                                 -R1, -R2)
            step = 1.0
            for _ in range(cfg.max_halvings + 1):
                r_new, m_new = r + step * dr, m + step * dm
                R1n, R2n, nrm_new = residual(r_new, m_new)
                if np.isfinite(nrm_new) and nrm_new < nrm:
                    break
                step *= 0.5
            else:
                raise NonConvergence(f"line search stalled at step {n}: residual {nrm:.3e}", n, nrm)
            r, m, R1, R2, nrm = r_new, m_new, R1n, R2n, nrm_new
            k += 1
        rho[n + 1], mu[n + 1] = r, m
        iters[n], res[n] = k, nrm
        fired[n] = bool(np.any(ph.clamp(pot, r)[1]))

    viol = (np.any(rho[1:] <= 0, axis=1) | np.any(rho[1:] >= 1, axis=1)
            | np.any(mu[1:] < -cfg.sign_tol, axis=1))
    if np.any(viol) or np.any(fired):
        log.warning("state bounds violated at %d steps, clamp fired at %d steps",
                    int(viol.sum()), int(fired.sum()))
    return StateTrajectory(st, rho, mu, iters, res, fired, viol)


@dataclass
class StabilityReport:
    ratios: np.ndarray | None  # per truncation level 1..nt
    degenerate: bool
    max_ratio: float

    @property
    def bounded(self) -> bool:
        return self.ratios is not None and bool(np.all(np.isfinite(self.ratios)))


def stability_ratios(st: SpaceTimeGrid, t1: StateTrajectory, t2: StateTrajectory,
                     u1, u2) -> StabilityReport:
    du = u1 - u2
    if not np.any(du):
        return StabilityReport(None, True, float("nan"))
    drho, dmu = t1.rho - t2.rho, t1.mu - t2.mu
    ratios = np.empty(st.nt)
    for k in range(1, st.nt + 1):
        num = (norm_h1_time(st, drho, k) + norm_h1_time(st, dmu, k)
               + norm_linf_time_h1(st, dmu, k))
        den = st.norm(du, k)
        ratios[k - 1] = num / den if den > 0 else np.inf
    return StabilityReport(ratios, False, float(np.max(ratios)))


def stability_probe(st, pot, B, u1, u2, init, cfg=SolverConfig()) -> StabilityReport:
    """Ratio of state differences to control differences at every truncation time."""
    if not np.any(u1 - u2):
        return StabilityReport(None, True, float("nan"))
    t1 = solve_state(st, pot, B, u1, init, cfg)
    t2 = solve_state(st, pot, B, u2, init, cfg)
    return stability_ratios(st, t1, t2, u1, u2)


def neumann_compatibility(st: SpaceTimeGrid, pot, u, traj: StateTrajectory) -> np.ndarray:
    """Per-step quadrature sum of (1+2g) mu_t + mu g' rho_t - u; vanishes with the Laplacian."""
    r0 = traj.rho[:-1]
    a = 1.0 + 2.0 * ph.g_eval(pot, r0)
    g1 = ph.g_prime(pot, r0)
    expr = a * traj.mu_t + traj.mu[1:] * g1 * traj.rho_t - u[1:]
    return expr @ st.grid.quad_weights

