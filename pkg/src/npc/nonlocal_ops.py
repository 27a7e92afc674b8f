"""Nonlocal operators B, their derivative DB and its L^2(Q) adjoint.

Shipped operators are linear and built from a dense node-to-node weight
matrix ``W[i, j] = k(|x_i - x_j|) * w_j`` (spatial quadrature folded into the
columns).  A time-history operator adds a causal trapezoid sum in time.

Every operator exposes both whole-trajectory application and the per-level
variants the time steppers need: ``apply_at(v, n)`` reads only ``v[:n+1]``,
``adjoint_at(q, n)`` reads only ``q[n:]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .grid import SpaceTimeGrid

KINDS = ("spatial_convolution", "time_history", "zero")
RADIAL = ("gaussian", "truncated_power")
TEMPORAL = ("constant", "exponential")

DENSE_LIMIT = 4096


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "spatial_convolution"
    radial: str = "gaussian"
    amplitude: float = 0.5
    sigma: float = 0.1
    alpha: float = 0.5
    r_min: float | None = None  # defaults to h/2
    temporal: str = "exponential"
    time_amplitude: float = 1.0
    time_rate: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kernel kind must be one of {KINDS}, got {self.kind!r}")
        if self.radial not in RADIAL:
            raise ValueError(f"radial kernel must be one of {RADIAL}, got {self.radial!r}")
        if self.temporal not in TEMPORAL:
            raise ValueError(f"temporal kernel must be one of {TEMPORAL}, got {self.temporal!r}")
        if not np.isfinite(self.amplitude) or not np.isfinite(self.time_amplitude):
            raise ValueError("kernel amplitudes must be finite")
        if self.sigma <= 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.r_min is not None and self.r_min <= 0:
            raise ValueError("r_min must be positive")

    def radial_values(self, r: np.ndarray, h_min: float) -> np.ndarray:
        if self.radial == "gaussian":
            return self.amplitude * np.exp(-0.5 * (r / self.sigma) ** 2)
        r_min = self.r_min if self.r_min is not None else 0.5 * h_min
        return self.amplitude * np.maximum(r, r_min) ** (-self.alpha)

    def temporal_values(self, s: np.ndarray) -> np.ndarray:
        if self.temporal == "constant":
            return np.full_like(s, self.time_amplitude, dtype=float)
        return self.time_amplitude * np.exp(-self.time_rate * s)


class NonlocalOperator:
    """Linear nonlocal operator on a space-time grid.

    ``DB[base] = B`` for every base, so ``apply_DB`` ignores ``base``.
    """

    linear = True

    def __init__(self, kernel: KernelSpec, st: SpaceTimeGrid):
        grid = st.grid
        if kernel.radial == "truncated_power" and kernel.kind != "zero" and not kernel.alpha < grid.dim:
            raise ValueError(f"truncated_power needs alpha < dim = {grid.dim} for integrability")
        self.kernel = kernel
        self.st = st
        n = grid.node_count
        if kernel.kind == "zero":
            self.K = np.zeros((n, n))
        else:
            pts = grid.points
            r = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
            self.K = kernel.radial_values(r, min(grid.h)) * grid.quad_weights[None, :]
        # spatial adjoint w.r.t. the weighted inner product: M^{-1} K^T M
        w = grid.quad_weights
        self.K_adj = (self.K.T * w[None, :]) / w[:, None]
        if kernel.kind == "time_history":
            self.time_matrix = self._time_matrix()
        else:
            self.time_matrix = None

    def _time_matrix(self) -> np.ndarray:
        st = self.st
        t = st.times
        nt = st.nt
        Tm = np.zeros((nt + 1, nt + 1))
        for n in range(1, nt + 1):
            c = np.full(n + 1, st.tau)
            c[0] = c[-1] = 0.5 * st.tau
            Tm[n, : n + 1] = c * self.kernel.temporal_values(t[n] - t[: n + 1])
        return Tm

    def _check(self, v):
        self.st.check(v)

    # -- whole trajectories -------------------------------------------------
    def apply(self, v: np.ndarray) -> np.ndarray:
        self._check(v)
        kv = v @ self.K.T
        if self.time_matrix is None:
            return kv
        return self.time_matrix @ kv

    def apply_DB(self, base: np.ndarray, w: np.ndarray) -> np.ndarray:
        self._check(base)
        return self.apply(w)

    def apply_DB_adjoint(self, base: np.ndarray, q: np.ndarray) -> np.ndarray:
        self._check(base)
        self._check(q)
        kq = q @ self.K_adj.T
        if self.time_matrix is None:
            return kq
        wt = self.st.time_weights
        # <q, T w>_wt = <T* q, w>_wt with T* = Wt^{-1} T^T Wt; level 0 has zero weight
        # only if nt == 0, which SpaceTimeGrid forbids
        return (self.time_matrix.T @ (wt[:, None] * kq)) / wt[:, None]

    # -- per-level access for time stepping ---------------------------------
    def apply_at(self, v: np.ndarray, n: int) -> np.ndarray:
        """``B[v]`` at time level n, reading only ``v[:n+1]``."""
        if self.time_matrix is None:
            return self.K @ v[n]
        row = self.time_matrix[n, : n + 1]
        return self.K @ (row @ v[: n + 1])

    def apply_DB_at(self, base: np.ndarray, w: np.ndarray, n: int) -> np.ndarray:
        return self.apply_at(w, n)

    def adjoint_at(self, base: np.ndarray, q: np.ndarray, n: int) -> np.ndarray:
        """``DB*[q]`` at time level n, reading only ``q[n:]``."""
        if self.time_matrix is None:
            return self.K_adj @ q[n]
        wt = self.st.time_weights
        col = self.time_matrix[n:, n] * wt[n:] / wt[n]
        return self.K_adj @ (col @ q[n:])

    def assemble_dense(self) -> np.ndarray:
        """Explicit space-time matrix acting on ``v.ravel()`` (row-major levels)."""
        nt1, n = self.st.shape
        if nt1 * n > DENSE_LIMIT:
            raise ValueError(f"dense assembly limited to {DENSE_LIMIT} unknowns, got {nt1 * n}")
        if self.time_matrix is None:
            return np.kron(np.eye(nt1), self.K)
        return np.kron(self.time_matrix, self.K)


class CallableOperator:
    """User-supplied (possibly nonlinear) causal operator.

    All three maps act on whole trajectories; the per-level variants pad
    the unread part with zeros, which is legitimate by causality
    (respectively anticausality of the adjoint).
    """

    linear = False

    def __init__(self, st: SpaceTimeGrid,
                 apply: Callable[[np.ndarray], np.ndarray],
                 derivative: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 adjoint: Callable[[np.ndarray, np.ndarray], np.ndarray]):
        self.st = st
        self._apply, self._derivative, self._adjoint = apply, derivative, adjoint

    def apply(self, v):
        return self._apply(v)

    def apply_DB(self, base, w):
        return self._derivative(base, w)

    def apply_DB_adjoint(self, base, q):
        return self._adjoint(base, q)

    def apply_at(self, v, n):
        padded = np.zeros(self.st.shape)
        padded[: n + 1] = v[: n + 1]
        return self._apply(padded)[n]

    def apply_DB_at(self, base, w, n):
        padded = np.zeros(self.st.shape)
        padded[: n + 1] = w[: n + 1]
        return self._derivative(base, padded)[n]

    def adjoint_at(self, base, q, n):
        padded = np.zeros(self.st.shape)
        padded[n:] = q[n:]
        return self._adjoint(base, padded)[n]


def operator_norm(op: NonlocalOperator, iters: int = 200, seed: int = 0) -> float:
    """L^2(Q) -> L^2(Q) norm of B by power iteration on the dense matrix.

    The weighted norm is the Euclidean norm of ``S v`` with
    ``S = sqrt(Wt (x) M)``, so iterate on ``S A S^{-1}``.
    """
    A = op.assemble_dense()
    s = np.sqrt(np.kron(op.st.time_weights, op.st.grid.quad_weights))
    C = (s[:, None] * A) / s[None, :]
    if not np.any(C):
        return 0.0
    x = np.random.default_rng(seed).standard_normal(C.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(iters):
        y = C.T @ (C @ x)
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
        new = np.sqrt(ny)
        if abs(new - sigma) <= 1e-12 * new:
            sigma = new
            break
        sigma = new
    return float(sigma)
