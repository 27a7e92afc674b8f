"""Tracking-type cost functional."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import SpaceTimeGrid


@dataclass(frozen=True)
class Betas:
    beta1: float = 1.0
    beta2: float = 1.0
    beta3: float = 0.0

    def __post_init__(self):
        vals = (self.beta1, self.beta2, self.beta3)
        if any(b < 0 for b in vals):
            raise ValueError(f"cost weights must be nonnegative, got {vals}")
        if not sum(vals) > 0:
            raise ValueError("at least one cost weight must be positive")


@dataclass
class Targets:
    rho_Q: np.ndarray
    mu_Q: np.ndarray


def eval_cost(st: SpaceTimeGrid, rho, mu, u, targets: Targets, betas: Betas) -> float:
    dr = rho - targets.rho_Q
    dm = mu - targets.mu_Q
    return 0.5 * (betas.beta1 * st.inner(dr, dr) + betas.beta2 * st.inner(dm, dm)
                  + betas.beta3 * st.inner(u, u))


def cost_of(traj, u, targets: Targets, betas: Betas) -> float:
    return eval_cost(traj.st, traj.rho, traj.mu, u, targets, betas)
