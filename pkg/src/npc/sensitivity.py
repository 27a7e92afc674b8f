"""Linearized state system and directional-derivative (Taylor remainder) checks.

The default scheme is the exact derivative of the discrete forward step, so
the Taylor remainder of the implementation decays at first order in the
step length.  ``lagged=False`` evaluates the coefficient perturbations of g
at the new level instead; it is an equally consistent discretization of the
continuous linearized system and is kept to measure the scheme mismatch.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import physics as ph
from .cost import Betas, Targets
from .errors import LinearSolveFailure
from .grid import SpaceTimeGrid, norm_h1_time, norm_l2_time_h1, norm_linf_time_l2
from .linalg import BlockSolveError, solve_block
from .state import InitialData, SolverConfig, StateTrajectory, solve_state


@dataclass
class LinearizedPair:
    xi: np.ndarray
    eta: np.ndarray


def _coefficients(base: StateTrajectory, pot):
    st = base.st
    tau = st.tau
    r0, r1 = base.rho[:-1], base.rho[1:]
    m0, m1 = base.mu[:-1], base.mu[1:]
    g1 = ph.g_prime(pot, r0)
    g2 = ph.g_second(pot, r0)
    return dict(
        a=1.0 + 2.0 * ph.g_eval(pot, r0),
        g1=g1,
        d=g1 * (r1 - r0) / tau,
        e=m1 * g1,
        c=2.0 * g1 * (m1 - m0) / tau + m1 * g2 * (r1 - r0) / tau,
        mg2=m1 * g2,
        f2=ph.F_second(pot, r1),
    )


def solve_linearized(base: StateTrajectory, pot: ph.PotentialSpec, B, h: np.ndarray,
                     cfg: SolverConfig = SolverConfig(), lagged: bool = True) -> LinearizedPair:
    st = base.st
    st.check(h)
    tau = st.tau
    co = _coefficients(base, pot)
    xi, eta = st.zeros(), st.zeros()
    for n in range(st.nt):
        a, g1, d, e, c, mg2, f2 = (co[k][n] for k in ("a", "g1", "d", "e", "c", "mg2", "f2"))
        hist = B.apply_DB_at(base.rho, xi, n)
        if lagged:
            r1 = h[n + 1] + a / tau * eta[n] - c * xi[n] + e / tau * xi[n]
            r2 = xi[n] / tau - hist + mg2 * xi[n]
            b_coef, d_coef = e / tau, 1.0 / tau + f2
        else:
            r1 = h[n + 1] + a / tau * eta[n] + e / tau * xi[n]
            r2 = xi[n] / tau - hist
            b_coef, d_coef = e / tau + c, 1.0 / tau + f2 - mg2
        try:
            eta[n + 1], xi[n + 1] = solve_block(st.grid, a / tau + d, b_coef, -g1, d_coef, r1, r2)
        except BlockSolveError as exc:
            raise LinearSolveFailure(str(exc), n) from exc
    return LinearizedPair(xi, eta)


def linearized_residual(base: StateTrajectory, pot, B, h, lin: LinearizedPair) -> float:
    """Max weighted residual of the (lagged) linearized stepping equations."""
    st = base.st
    tau = st.tau
    co = _coefficients(base, pot)
    xi, eta = lin.xi, lin.eta
    dB = B.apply_DB(base.rho, xi)[:-1]
    lap = (st.grid.laplacian @ eta[1:].T).T
    R1 = (co["a"] * (eta[1:] - eta[:-1]) / tau + co["c"] * xi[:-1] + co["d"] * eta[1:]
          + co["e"] * (xi[1:] - xi[:-1]) / tau - lap - h[1:])
    R2 = (xi[1:] - xi[:-1]) / tau + dB + co["f2"] * xi[1:] - co["g1"] * eta[1:] - co["mg2"] * xi[:-1]
    w = st.grid.quad_weights
    return float(np.sqrt(np.sum(w * (R1**2 + R2**2), axis=1)).max())


def y_norm(st: SpaceTimeGrid, rho_part: np.ndarray, mu_part: np.ndarray) -> float:
    """H^1(0,T;H) on the first component plus L^inf(0,T;H) and L^2(0,T;V) on the second."""
    return (norm_h1_time(st, rho_part) + norm_linf_time_l2(st, mu_part)
            + norm_l2_time_h1(st, mu_part))


@dataclass
class TaylorTable:
    lambdas: np.ndarray
    remainders: np.ndarray
    ratios: np.ndarray
    degenerate: bool = False
    scheme_mismatch: float = float("nan")

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.remainders) < 0))


def taylor_test(st: SpaceTimeGrid, pot, B, u, h, lambdas, init: InitialData,
                cfg: SolverConfig = SolverConfig()) -> TaylorTable:
    lambdas = np.asarray(lambdas, dtype=float)
    if not np.any(h):
        nan = np.full(len(lambdas), np.nan)
        return TaylorTable(lambdas, nan, nan[:-1], degenerate=True)
    base = solve_state(st, pot, B, u, init, cfg)
    lin = solve_linearized(base, pot, B, h, cfg)
    alt = solve_linearized(base, pot, B, h, cfg, lagged=False)
    mismatch = (y_norm(st, lin.xi - alt.xi, lin.eta - alt.eta)
                / max(y_norm(st, lin.xi, lin.eta), 1e-300))
    rem = np.empty(len(lambdas))
    for i, lam in enumerate(lambdas):
        pert = solve_state(st, pot, B, u + lam * h, init, cfg)
        y = pert.rho - base.rho - lam * lin.xi
        z = pert.mu - base.mu - lam * lin.eta
        rem[i] = y_norm(st, y, z) / lam
    return TaylorTable(lambdas, rem, rem[:-1] / rem[1:], scheme_mismatch=float(mismatch))


def cost_derivative(base: StateTrajectory, lin: LinearizedPair, u, h,
                    targets: Targets, betas: Betas) -> float:
    """Directional derivative of the cost along h through the linearized pair."""
    st = base.st
    return (betas.beta1 * st.inner(base.rho - targets.rho_Q, lin.xi)
            + betas.beta2 * st.inner(base.mu - targets.mu_Q, lin.eta)
            + betas.beta3 * st.inner(u, h))
