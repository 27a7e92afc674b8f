"""Admissible-set projection and projected-gradient descent.

The admissible set is ``{0 <= u <= u_max} ∩ {||u||_{H1(0,T;L2)} <= R}``.
Projections are taken in the H1(0,T;L2) metric, the norm that defines the
ball.  Per spatial node that metric is ``w_j * u_j^T A u_j`` with the
tridiagonal time matrix ``A = diag(trapezoid weights) + D^T D / tau``.
The spatial weight factors out, so the box projection splits into one
obstacle problem in time per node; it is solved by a primal-dual active
set method.  The two projections are combined with Dykstra's algorithm.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import lsq_linear

from .cost import Betas, Targets, eval_cost
from .adjoint import gradient, solve_adjoint
from .errors import LinearSolveFailure, NonConvergence
from .grid import SpaceTimeGrid, trapezoid_weights
from .state import InitialData, SolverConfig, solve_state

log = logging.getLogger(__name__)

__all__ = ["H1TimeMetric", "ControlConstraints", "ProjectionConfig", "OptConfig",
           "ControlProblem", "OptRun", "project_box", "project_ball", "project_Uad",
           "stationarity", "projected_gradient", "eval_cost"]


@dataclass(frozen=True)
class H1TimeMetric:
    """The H1(0,T;L2) inner product on node-valued space-time arrays."""

    tau: float
    nt: int
    space_weights: np.ndarray

    @classmethod
    def from_grid(cls, st: SpaceTimeGrid) -> "H1TimeMetric":
        return cls(st.tau, st.nt, st.grid.quad_weights)

    @property
    def time_weights(self) -> np.ndarray:
        return trapezoid_weights(self.nt, self.tau)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt + 1, len(self.space_weights))

    def banded(self) -> np.ndarray:
        """A in the (1, 1) banded layout of ``scipy.linalg.solve_banded``."""
        n = self.nt + 1
        main = self.time_weights.copy()
        main[:-1] += 1.0 / self.tau
        main[1:] += 1.0 / self.tau
        ab = np.zeros((3, n))
        ab[0, 1:] = ab[2, :-1] = -1.0 / self.tau
        ab[1] = main
        return ab

    def dense_time_matrix(self) -> np.ndarray:
        ab = self.banded()
        return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)

    def apply(self, u: np.ndarray) -> np.ndarray:
        """A applied along the time axis."""
        out = self.time_weights[:, None] * u
        du = np.diff(u, axis=0) / self.tau
        out[:-1] -= du
        out[1:] += du
        return out

    def inner(self, u, v) -> float:
        return float(np.sum(self.space_weights * (u * self.apply(v))))

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def l2_inner(self, u, v) -> float:
        return float(np.einsum("n,i,ni->", self.time_weights, self.space_weights, u * v))

    def l2_norm(self, u) -> float:
        return float(np.sqrt(self.l2_inner(u, u)))

    def riesz(self, G: np.ndarray) -> np.ndarray:
        """H1 representative d of an L2(Q) gradient G: <d, v>_H1 = <G, v>_L2."""
        return solve_banded((1, 1), self.banded(), self.time_weights[:, None] * G)


@dataclass(frozen=True)
class ControlConstraints:
    """Box ``0 <= u <= u_max`` (scalar or space-time array) and H1 ball of radius R.

    Either part may be None (absent).
    """

    metric: H1TimeMetric
    u_max: float | np.ndarray | None = None
    R: float | None = None

    def __post_init__(self):
        if self.u_max is not None:
            um = np.asarray(self.u_max, dtype=float)
            if um.ndim and um.shape != self.metric.shape:
                raise ValueError(f"u_max shape {um.shape} does not match {self.metric.shape}")
            if np.any(um < 0) or not np.all(np.isfinite(um)):
                raise ValueError("u_max must be finite and nonnegative")
        if self.R is not None and not self.R > 0:
            raise ValueError("R must be positive")

    @classmethod
    def on(cls, st: SpaceTimeGrid, u_max=None, R=None) -> "ControlConstraints":
        return cls(H1TimeMetric.from_grid(st), u_max, R)

    @property
    def upper(self):
        return np.inf if self.u_max is None else np.asarray(self.u_max, dtype=float)

    def in_box(self, u, tol: float = 0.0) -> bool:
        return bool(np.all(u >= -tol) and np.all(u <= self.upper + tol))

    def in_ball(self, u, rtol: float = 0.0) -> bool:
        return self.R is None or self.metric.norm(u) <= self.R * (1 + rtol)

    def feasible(self, u, rtol: float = 1e-10) -> bool:
        return self.in_box(u) and self.in_ball(u, rtol)


@dataclass(frozen=True)
class ProjectionConfig:
    proj_tol: float = 1e-12
    max_dykstra_iters: int = 20000
    box_method: str = "pdas"        # or "pgs"
    max_box_iters: int = 30
    box_tol: float = 1e-12
    max_pgs_sweeps: int = 200000
    l2_heuristic: bool = False      # clip then scale; feasible but not the projection


def _thomas(lower, diag, upper, rhs):
    """Batched tridiagonal solve along axis 0; lower[0] and upper[-1] are ignored."""
    n = diag.shape[0]
    c = np.empty_like(diag)
    d = np.empty_like(rhs)
    c[0] = upper[0] / diag[0]
    d[0] = rhs[0] / diag[0]
    for i in range(1, n):
        den = diag[i] - lower[i] * c[i - 1]
        c[i] = upper[i] / den
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / den
    x = np.empty_like(rhs)
    x[-1] = d[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _box_node_exact(z, metric: H1TimeMetric, lo, hi):
    """Bounded least squares on the Cholesky factor of A; an exact active-set fallback."""
    A = metric.dense_time_matrix()
    C = np.linalg.cholesky(A).T
    res = lsq_linear(C, C @ z, bounds=(lo, hi), method="bvls", tol=1e-15)
    return res.x


def _box_pdas(z, metric: H1TimeMetric, lo, hi, cfg: ProjectionConfig):
    ab = metric.banded()
    n, K = z.shape
    diag0 = np.repeat(ab[1][:, None], K, axis=1)
    off = -1.0 / metric.tau
    b = metric.apply(z)
    v = np.clip(z, lo, hi)
    upper_set, lower_set = v >= hi, v <= lo
    cpar = 1.0 / metric.tau
    settled = np.zeros(K, dtype=bool)
    for it in range(cfg.max_box_iters):
        act = upper_set | lower_set
        diag = np.where(act, 1.0, diag0)
        lower = np.where(act, 0.0, off)
        upper = np.where(act, 0.0, off)
        rhs = np.where(upper_set, hi, np.where(lower_set, lo, b))
        v = _thomas(lower, diag, upper, rhs)
        mult = b - metric.apply(v)
        mult[~act] = 0.0
        new_up = mult + cpar * (v - hi) > 0
        new_lo = mult + cpar * (v - lo) < 0
        settled = np.all(new_up == upper_set, axis=0) & np.all(new_lo == lower_set, axis=0)
        if settled.all():
            return np.clip(v, lo, hi), it + 1
        upper_set, lower_set = new_up, new_lo
    # two-sided active-set iterations can cycle; finish those nodes exactly
    for j in np.flatnonzero(~settled):
        v[:, j] = _box_node_exact(z[:, j], metric, lo, hi[:, j])
    return np.clip(v, lo, hi), cfg.max_box_iters


def _box_pgs(z, metric: H1TimeMetric, lo, hi, cfg: ProjectionConfig):
    ab = metric.banded()
    b = metric.apply(z)
    v = np.clip(z, lo, hi)
    n = z.shape[0]
    off = -1.0 / metric.tau
    for sweep in range(cfg.max_pgs_sweeps):
        change = 0.0
        for i in range(n):
            s = b[i].copy()
            if i > 0:
                s -= off * v[i - 1]
            if i < n - 1:
                s -= off * v[i + 1]
            new = np.clip(s / ab[1, i], lo, hi[i])
            change = max(change, float(np.abs(new - v[i]).max()))
            v[i] = new
        if change <= cfg.box_tol:
            return v, sweep + 1
    raise NonConvergence("projected Gauss-Seidel did not converge")


def project_box(z, cons: ControlConstraints, cfg: ProjectionConfig = ProjectionConfig()):
    """H1-metric projection onto {0 <= v <= u_max}: one obstacle problem in time per node."""
    hi = np.broadcast_to(cons.upper, z.shape)
    if cons.in_box(z):
        return z.copy()
    if cfg.box_method not in ("pdas", "pgs"):
        raise ValueError(f"unknown box method {cfg.box_method!r}")
    solver = _box_pdas if cfg.box_method == "pdas" else _box_pgs
    return solver(z, cons.metric, 0.0, hi, cfg)[0]


def project_ball(z, cons: ControlConstraints):
    if cons.R is None:
        return z.copy()
    nrm = cons.metric.norm(z)
    return z * min(1.0, cons.R / nrm) if nrm > 0 else z.copy()


def _finalize(x, cons: ControlConstraints):
    """Remove roundoff-level infeasibility; scaling by <= 1 keeps the box."""
    x = np.clip(x, 0.0, cons.upper)
    if cons.R is not None:
        nrm = cons.metric.norm(x)
        if nrm > cons.R:
            x = x * (cons.R / nrm)
    return x


def project_Uad(u, cons: ControlConstraints, cfg: ProjectionConfig = ProjectionConfig()):
    """Nearest admissible control in the H1(0,T;L2) metric."""
    u = np.asarray(u, dtype=float)
    if u.shape != cons.metric.shape:
        raise ValueError(f"control shape {u.shape} does not match {cons.metric.shape}")
    if cfg.l2_heuristic:
        return _finalize(np.clip(u, 0.0, cons.upper), cons)
    if cons.feasible(u, rtol=0.0):
        return u.copy()
    y = project_box(u, cons, cfg)
    if cons.in_ball(y):
        return y
    y = project_ball(u, cons)
    if cons.in_box(y):
        return y
    x = u.copy()
    p = np.zeros_like(u)
    q = np.zeros_like(u)
    m = cons.metric
    for k in range(cfg.max_dykstra_iters):
        y = project_box(x + p, cons, cfg)
        p = x + p - y
        x_new = project_ball(y + q, cons)
        q = y + q - x_new
        change = m.norm(x_new - x)
        x = x_new
        if change <= cfg.proj_tol and m.norm(x - y) <= cfg.proj_tol:
            return _finalize(x, cons)
    raise NonConvergence(f"Dykstra did not converge in {cfg.max_dykstra_iters} iterations",
                         residual=change)


def stationarity(u, G, cons: ControlConstraints, cfg: "OptConfig" = None) -> float:
    """Fixed-point residual ``||u - P(u - s0 d)||_{L2(Q)} / s0`` with s0 = 1.

    d is G itself for ``gradient_metric="l2"`` and its H1 Riesz representative
    otherwise; only the latter makes zero residual equivalent to the L2
    variational inequality under the H1-metric projection.
    """
    cfg = cfg or OptConfig()
    if np.shape(u) != np.shape(G):
        raise ValueError("control and gradient shapes differ")
    d = cons.metric.riesz(G) if cfg.gradient_metric == "h1" else G
    s0 = 1.0
    return cons.metric.l2_norm(u - project_Uad(u - s0 * d, cons, cfg.projection)) / s0


@dataclass(frozen=True)
class OptConfig:
    max_iters: int = 500
    stat_tol: float = 1e-10
    s_init: float = 1.0
    backtrack: float = 0.5
    sigma: float = 1e-4
    s_min: float = 1e-10
    gradient_metric: str = "h1"     # or "l2"
    step_rule: str = "bb"           # "bb1", "bb2", "bb" alternates; "fixed" uses s_init
    s_max: float = 1e8
    keep_every: int = 1
    projection: ProjectionConfig = ProjectionConfig()

    def __post_init__(self):
        if self.gradient_metric not in ("h1", "l2"):
            raise ValueError("gradient_metric must be 'h1' or 'l2'")
        if self.step_rule not in ("fixed", "bb", "bb1", "bb2"):
            raise ValueError("step_rule must be one of fixed, bb, bb1, bb2")
        if not 0 < self.backtrack < 1 or not 0 < self.sigma < 1:
            raise ValueError("need 0 < backtrack < 1 and 0 < sigma < 1")


@dataclass
class ControlProblem:
    st: SpaceTimeGrid
    pot: object
    B: object
    init: InitialData
    targets: Targets
    betas: Betas
    cons: ControlConstraints
    solver: SolverConfig = SolverConfig()

    def cost(self, u):
        traj = solve_state(self.st, self.pot, self.B, u, self.init, self.solver)
        return eval_cost(self.st, traj.rho, traj.mu, u, self.targets, self.betas), traj

    def gradient(self, u, traj=None):
        if traj is None:
            traj = solve_state(self.st, self.pot, self.B, u, self.init, self.solver)
        adj = solve_adjoint(traj, self.pot, self.B, self.targets, self.betas, self.solver)
        return gradient(u, adj.p_control, self.betas.beta3), adj


@dataclass
class OptRun:
    iterates: list = field(default_factory=list)
    cost_history: list = field(default_factory=list)
    stationarity_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    exit_reason: str = "max_iters"
    u: np.ndarray | None = None
    records: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.cost_history) - 1

    def to_csv(self, path) -> None:
        cols = ["iter", "J", "stationarity", "step", "norm_l2", "norm_h1"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for rec in self.records:
                w.writerow([rec[0]] + ["%.17g" % v for v in rec[1:]])


def projected_gradient(problem: ControlProblem, u0, cfg: OptConfig = OptConfig()) -> OptRun:
    cons = problem.cons
    m = cons.metric
    u = np.asarray(u0, dtype=float).copy()
    if not cons.feasible(u):
        raise ValueError("u0 must be admissible; project it first")
    J, traj = problem.cost(u)
    run = OptRun()
    step = 0.0
    prev = None
    for k in range(cfg.max_iters + 1):
        G, _ = problem.gradient(u, traj)
        d = m.riesz(G) if cfg.gradient_metric == "h1" else G
        stat = m.l2_norm(u - project_Uad(u - d, cons, cfg.projection))
        run.cost_history.append(J)
        run.stationarity_history.append(stat)
        run.step_history.append(step)
        run.records.append((k, J, stat, step, m.l2_norm(u), m.norm(u)))
        if k % cfg.keep_every == 0:
            run.iterates.append(u.copy())
        log.info("iter %d J=%.6e stat=%.3e step=%.2e", k, J, stat, step)
        if stat <= cfg.stat_tol:
            run.exit_reason = "tol"
            break
        if k == cfg.max_iters:
            break
        s = cfg.s_init
        if cfg.step_rule != "fixed" and prev is not None:
            # Barzilai-Borwein lengths in the metric of the search direction
            du, dd = u - prev[0], d - prev[1]
            inner = m.inner if cfg.gradient_metric == "h1" else m.l2_inner
            curv = inner(du, dd)
            if curv > 0:
                long_, short = inner(du, du) / curv, curv / inner(dd, dd)
                rule = cfg.step_rule if cfg.step_rule != "bb" else ("bb1", "bb2")[k % 2]
                s = min(max(long_ if rule == "bb1" else short, cfg.s_min), cfg.s_max)
        prev = (u, d)
        accepted = False
        while s >= cfg.s_min:
            trial = project_Uad(u - s * d, cons, cfg.projection)
            decrease = m.l2_inner(G, trial - u)
            try:
                J_trial, traj_trial = problem.cost(trial)
            except (NonConvergence, LinearSolveFailure):
                s *= cfg.backtrack
                continue
            if J_trial <= J + cfg.sigma * decrease and J_trial <= J:
                accepted = True
                break
            s *= cfg.backtrack
        if not accepted:
            run.exit_reason = "line_search_failure"
            break
        u, J, traj, step = trial, J_trial, traj_trial, s
    if run.iterates and run.iterates[-1] is not u and not np.array_equal(run.iterates[-1], u):
        run.iterates.append(u.copy())
    run.u = u
    return run
