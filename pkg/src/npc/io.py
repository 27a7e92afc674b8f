"""CSV output: one row per (time index, node index) for fields, 17 significant digits."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import SpaceTimeGrid


def _fmt(v: float) -> str:
    return "%.17g" % v


def write_fields_csv(path, st: SpaceTimeGrid, **fields: np.ndarray) -> None:
    st.check(*fields.values())
    pts = st.grid.points
    coord_names = ["x", "y"][: st.grid.dim]
    names = list(fields)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "t", "node", *coord_names, *names])
        for n, t in enumerate(st.times):
            for i in range(st.grid.node_count):
                w.writerow([n, _fmt(t), i, *(_fmt(c) for c in pts[i]),
                            *(_fmt(fields[k][n, i]) for k in names)])


def read_fields_csv(path, st: SpaceTimeGrid) -> dict[str, np.ndarray]:
    """Inverse of :func:`write_fields_csv`; checks the index layout against ``st``."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    if header[:3] != ["n", "t", "node"]:
        raise ValueError(f"{path}: unexpected header {header[:3]}")
    ncoord = st.grid.dim
    names = header[3 + ncoord:]
    nt1, N = st.shape
    if len(body) != nt1 * N:
        raise ValueError(f"{path}: {len(body)} rows, expected {nt1 * N}")
    data = np.array([[float(v) for v in r] for r in body])
    n_idx, node_idx = data[:, 0].astype(int), data[:, 2].astype(int)
    if np.any(n_idx != np.repeat(np.arange(nt1), N)) or np.any(node_idx != np.tile(np.arange(N), nt1)):
        raise ValueError(f"{path}: row order does not match the grid")
    return {k: data[:, 3 + ncoord + j].reshape(nt1, N) for j, k in enumerate(names)}


def write_rows_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, float) else v for v in r])
