"""Brute-force reference solutions used by the harness and the tests."""
from __future__ import annotations

import itertools

import numpy as np


def kkt_projection(z, metric, u_max, R):
    """H1-metric projection onto box ∩ ball by enumerating active sets.

    Feasible only for a handful of unknowns (3**n box patterns).  For each
    pattern the ball-inactive candidate solves the free block directly; the
    ball-active candidate uses s = 1/(1 + nu), in which the free part is
    affine, so ``||v(s)||^2 = R^2`` is a scalar quadratic.  The projection is
    the feasible candidate of least distance.
    """
    shape = z.shape
    A = np.kron(metric.dense_time_matrix(), np.diag(metric.space_weights))
    zf = z.ravel()
    n = zf.size
    if n > 9:
        raise ValueError("enumeration limited to 9 unknowns")
    hi = np.broadcast_to(np.inf if u_max is None else np.asarray(u_max, float), shape).ravel()
    Az = A @ zf
    best, best_d = None, np.inf

    def consider(v):
        nonlocal best, best_d
        if np.any(v < -1e-12) or np.any(v > hi + 1e-12):
            return
        if R is not None and v @ A @ v > R * R * (1 + 1e-10):
            return
        d = (v - zf) @ A @ (v - zf)
        if d < best_d:
            best, best_d = v, d

    for pattern in itertools.product((0, 1, 2), repeat=n):
        pat = np.array(pattern)
        if u_max is None and np.any(pat == 2):
            continue
        free = pat == 0
        v_act = np.where(pat == 2, np.where(np.isfinite(hi), hi, 0.0), 0.0)
        F = np.flatnonzero(free)
        v = v_act.copy()
        if F.size:
            AFF = A[np.ix_(F, F)]
            a = np.linalg.solve(AFF, Az[F])
            b = -np.linalg.solve(AFF, A[np.ix_(F, ~free)] @ v_act[~free])
        else:
            a = b = np.zeros(0)
        v[F] = a + b
        consider(v.copy())
        if R is None or not F.size:
            continue
        va, vb = np.zeros(n), v_act.copy()
        va[F], vb[F] = a, b
        c2, c1, c0 = va @ A @ va, 2 * va @ A @ vb, vb @ A @ vb - R * R
        for s in np.roots([c2, c1, c0]):
            if abs(s.imag) < 1e-12 and 0 < s.real <= 1:
                consider(s.real * va + vb)
    if best is None:
        raise ValueError("no feasible candidate")
    return best.reshape(shape)
