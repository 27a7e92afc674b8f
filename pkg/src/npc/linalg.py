"""Per-step 2x2 block solves shared by the forward, linearized and adjoint steppers.

Every time step of every scheme reduces to

    (diag(a) - L) x + diag(b) y = r1
     diag(c)  x     + diag(d) y = r2

with L the Neumann Laplacian.  The second block row is pointwise, so the
Schur complement in x is a Laplacian-shaped system (tridiagonal in 1D).
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import Grid


class BlockSolveError(RuntimeError):
    pass


def _banded_laplacian(grid: Grid) -> np.ndarray:
    cached = getattr(grid, "_banded_lap", None)
    if cached is None:
        L = grid.laplacian.todia()
        n = grid.node_count
        cached = np.zeros((3, n))
        for off, row in zip(L.offsets, L.data):
            if off == 1:
                cached[0, 1:] = row[1:]
            elif off == 0:
                cached[1] = row
            elif off == -1:
                cached[2, :-1] = row[:-1]
        object.__setattr__(grid, "_banded_lap", cached)
    return cached


def solve_block(grid: Grid, a, b, c, d, r1, r2) -> tuple[np.ndarray, np.ndarray]:
    a, b, c, d = (np.broadcast_to(v, r1.shape) for v in (a, b, c, d))
    scale = np.max(np.abs(d)) if np.any(d) else 0.0
    if scale > 0 and np.min(np.abs(d)) > 1e-8 * scale:
        diag = a - b * c / d
        rhs = r1 - b * r2 / d
        if grid.dim == 1:
            ab = -_banded_laplacian(grid).copy()
            ab[1] += diag
            x = sla.solve_banded((1, 1), ab, rhs, check_finite=False)
        else:
            A = (sp.diags(diag) - grid.laplacian).tocsc()
            x = spla.spsolve(A, rhs)
        y = (r2 - c * x) / d
    else:
        A = sp.bmat([[sp.diags(a) - grid.laplacian, sp.diags(b)],
                     [sp.diags(c), sp.diags(d)]], format="csc")
        sol = spla.spsolve(A, np.concatenate([r1, r2]))
        x, y = sol[: r1.size], sol[r1.size:]
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise BlockSolveError("non-finite solution of per-step block system")
    return x, y
