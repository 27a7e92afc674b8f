"""Uniform node-centred grids on intervals and rectangles.

Nodes include the boundary.  The Neumann Laplacian uses ghost-node
reflection, so the trapezoid-weighted operator ``M @ L`` is symmetric and
annihilates constants.  Space-time fields are plain arrays of shape
``(nt + 1, node_count)`` with row 0 the initial time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class GridSpec:
    dim: int
    lengths: tuple[float, ...]
    cells_per_axis: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(v) for v in self.lengths))
        object.__setattr__(self, "cells_per_axis", tuple(int(v) for v in self.cells_per_axis))
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if len(self.lengths) != self.dim or len(self.cells_per_axis) != self.dim:
            raise ValueError("lengths and cells_per_axis need one entry per axis")
        if any(not np.isfinite(v) or v <= 0 for v in self.lengths):
            raise ValueError(f"lengths must be positive, got {self.lengths}")
        if any(c < 2 for c in self.cells_per_axis):
            raise ValueError(f"need at least 2 cells per axis, got {self.cells_per_axis}")


def _axis_laplacian(n_cells: int, h: float) -> sp.csr_matrix:
    n = n_cells + 1
    main = np.full(n, -2.0)
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    # ghost reflection f_{-1} = f_1, f_{n} = f_{n-2}
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr") / h**2


def _axis_weights(n_cells: int, h: float) -> np.ndarray:
    w = np.full(n_cells + 1, h)
    w[0] = w[-1] = 0.5 * h
    return w


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    h: tuple[float, ...]
    shape: tuple[int, ...]
    coords: tuple[np.ndarray, ...] = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    laplacian: sp.csr_matrix = field(repr=False)

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def node_count(self) -> int:
        return int(np.prod(self.shape))

    @property
    def volume(self) -> float:
        return float(np.prod(self.spec.lengths))

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(node_count, dim)``."""
        mesh = np.meshgrid(*self.coords, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]


def build_grid(spec: GridSpec) -> Grid:
    h = tuple(L / n for L, n in zip(spec.lengths, spec.cells_per_axis))
    coords = tuple(np.linspace(0.0, L, n + 1) for L, n in zip(spec.lengths, spec.cells_per_axis))
    shape = tuple(n + 1 for n in spec.cells_per_axis)
    lap_1d = [_axis_laplacian(n, hh) for n, hh in zip(spec.cells_per_axis, h)]
    w_1d = [_axis_weights(n, hh) for n, hh in zip(spec.cells_per_axis, h)]
    if spec.dim == 1:
        lap, w = lap_1d[0], w_1d[0]
    else:
        ix, iy = sp.identity(shape[0]), sp.identity(shape[1])
        lap = (sp.kron(lap_1d[0], iy) + sp.kron(ix, lap_1d[1])).tocsr()
        w = np.kron(w_1d[0], w_1d[1])
    return Grid(spec=spec, h=h, shape=shape, coords=coords, quad_weights=w, laplacian=lap)


def _check_nodes(grid: Grid, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f)
    if f.shape[-1] != grid.node_count:
        raise ValueError(f"field has {f.shape[-1]} nodes, grid has {grid.node_count}")
    return f


def laplacian_neumann(grid: Grid, f: np.ndarray) -> np.ndarray:
    """Apply the discrete Neumann Laplacian along the last axis of ``f``."""
    f = _check_nodes(grid, f)
    if f.ndim == 1:
        return grid.laplacian @ f
    return (grid.laplacian @ f.reshape(-1, grid.node_count).T).T.reshape(f.shape)


def inner_l2(grid: Grid, f: np.ndarray, g: np.ndarray) -> float:
    f, g = _check_nodes(grid, f), _check_nodes(grid, g)
    return float(np.sum(grid.quad_weights * f * g))


def norm_l2(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(inner_l2(grid, f, f)))


def grad_seminorm_sq(grid: Grid, f: np.ndarray) -> float:
    """Discrete Dirichlet energy ``-<f, L f>``, the square of the H^1 seminorm."""
    return max(-inner_l2(grid, f, laplacian_neumann(grid, f)), 0.0)


def norm_h1_space(grid: Grid, f: np.ndarray) -> float:
    return float(np.sqrt(inner_l2(grid, f, f) + grad_seminorm_sq(grid, f)))


@dataclass(frozen=True, eq=False)
class SpaceTimeGrid:
    """A spatial grid paired with a uniform time grid on ``[0, T]``."""

    grid: Grid
    T: float
    nt: int

    def __post_init__(self):
        if not (self.T > 0 and np.isfinite(self.T)):
            raise ValueError(f"final time must be positive, got {self.T}")
        if self.nt < 1:
            raise ValueError(f"need at least one time step, got {self.nt}")

    @property
    def tau(self) -> float:
        return self.T / self.nt

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nt + 1, self.grid.node_count)

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt + 1)

    @cached_property
    def time_weights(self) -> np.ndarray:
        return trapezoid_weights(self.nt, self.tau)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def check(self, *fields: np.ndarray) -> None:
        for f in fields:
            if np.shape(f) != self.shape:
                raise ValueError(f"space-time field has shape {np.shape(f)}, expected {self.shape}")

    def inner(self, f: np.ndarray, g: np.ndarray, upto: int | None = None) -> float:
        """Trapezoid space-time inner product over ``[0, t_upto]``."""
        self.check(f, g)
        k = self.nt if upto is None else upto
        wt = trapezoid_weights(k, self.tau) if k > 0 else np.zeros(1)
        return float(np.einsum("n,i,ni,ni->", wt, self.grid.quad_weights, f[: k + 1], g[: k + 1]))

    def norm(self, f: np.ndarray, upto: int | None = None) -> float:
        return float(np.sqrt(max(self.inner(f, f, upto), 0.0)))


def trapezoid_weights(n_steps: int, tau: float) -> np.ndarray:
    w = np.full(n_steps + 1, tau)
    w[0] = w[-1] = 0.5 * tau
    if n_steps == 0:
        w[0] = 0.0
    return w


def norm_h1_time(st: SpaceTimeGrid, u: np.ndarray, upto: int | None = None) -> float:
    """Discrete H^1(0, t; L^2) norm: trapezoid L^2 part plus backward-difference part."""
    st.check(u)
    k = st.nt if upto is None else upto
    u = u[: k + 1]
    w = st.grid.quad_weights
    wt = trapezoid_weights(k, st.tau)
    val = np.einsum("n,i,ni->", wt, w, u * u)
    du = np.diff(u, axis=0) / st.tau
    val += st.tau * np.einsum("i,ni->", w, du * du)
    return float(np.sqrt(val))


def norm_linf_time_h1(st: SpaceTimeGrid, u: np.ndarray, upto: int | None = None) -> float:
    """max over time levels of the spatial H^1 norm."""
    k = st.nt if upto is None else upto
    return max(norm_h1_space(st.grid, u[n]) for n in range(k + 1))


def norm_linf_time_l2(st: SpaceTimeGrid, u: np.ndarray, upto: int | None = None) -> float:
    k = st.nt if upto is None else upto
    return max(norm_l2(st.grid, u[n]) for n in range(k + 1))


def norm_l2_time_h1(st: SpaceTimeGrid, u: np.ndarray, upto: int | None = None) -> float:
    k = st.nt if upto is None else upto
    wt = trapezoid_weights(k, st.tau)
    return float(np.sqrt(sum(wt[n] * norm_h1_space(st.grid, u[n]) ** 2 for n in range(k + 1))))


def refine(st: SpaceTimeGrid, space: bool = True, time: bool = True) -> SpaceTimeGrid:
    spec = st.grid.spec
    cells = tuple(2 * c for c in spec.cells_per_axis) if space else spec.cells_per_axis
    grid = build_grid(GridSpec(spec.dim, spec.lengths, cells)) if space else st.grid
    return SpaceTimeGrid(grid, st.T, 2 * st.nt if time else st.nt)
