"""Double-well potential F = F1 + F2 and coupling function g.

F1 is the logarithmic potential ``c_hat * (r log r + (1 - r) log(1 - r))``
evaluated at arguments clamped to ``[eps_clip, 1 - eps_clip]``.  In
``smooth`` mode F1 is replaced by its quartic Taylor polynomial about 1/2,
which removes the clamp and makes the state map smooth on all of R; this is
the regime used by the derivative (Taylor/gradient) checks.

F2 and g are polynomials.  All evaluators are vectorised and accept complex
input in smooth mode (complex-step differentiation).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

G_KINDS = ("constant", "affine", "smooth_concave")


@dataclass(frozen=True)
class PotentialSpec:
    c_hat: float = 1.0
    c2: float | None = None
    f2: tuple[float, ...] | None = None  # increasing-order coefficients; overrides c2
    smooth: bool = False
    g_kind: str = "smooth_concave"
    g0: float = 0.0
    g1: float = 0.0
    a: float = 1.0
    b: float = 0.0
    eps_clip: float = 1e-6

    def __post_init__(self):
        if not self.c_hat > 0:
            raise ValueError(f"c_hat must be positive, got {self.c_hat}")
        if self.g_kind not in G_KINDS:
            raise ValueError(f"g_kind must be one of {G_KINDS}, got {self.g_kind!r}")
        if not 0 < self.eps_clip < 0.05:
            raise ValueError(f"eps_clip must lie in (0, 0.05), got {self.eps_clip}")
        if self.f2 is not None:
            object.__setattr__(self, "f2", tuple(float(c) for c in self.f2))

    @property
    def f2_coeffs(self) -> np.ndarray:
        if self.f2 is not None:
            return np.array(self.f2, dtype=float)
        c2 = 2.0 * self.c_hat if self.c2 is None else self.c2
        # -c2 (r - 1/2)^2
        return np.array([-0.25 * c2, c2, -c2])

    @property
    def g_coeffs(self) -> np.ndarray:
        if self.g_kind == "constant":
            return np.array([self.g0])
        if self.g_kind == "affine":
            return np.array([self.g0, self.g1])
        return np.array([self.b, 2.0 * self.a, -self.a])

    @property
    def f1_smooth_coeffs(self) -> np.ndarray:
        # c_hat * (-log 2 + 2 x^2 + (4/3) x^4), x = r - 1/2, expanded in r
        x = np.array([-0.5, 1.0])
        x2 = P.polymul(x, x)
        poly = P.polyadd(P.polyadd([-np.log(2.0)], 2.0 * x2), (4.0 / 3.0) * P.polymul(x2, x2))
        return self.c_hat * poly


def _reject_nan(rho):
    rho = np.asarray(rho)
    if np.isrealobj(rho) and np.any(np.isnan(rho)):
        raise ValueError("NaN passed to potential evaluation")
    return rho


def clamp(spec: PotentialSpec, rho) -> tuple[np.ndarray, np.ndarray]:
    """Clamp to ``[eps, 1 - eps]``; returns the clamped values and where it fired."""
    rho = _reject_nan(rho)
    if spec.smooth:
        return rho, np.zeros(np.shape(rho), dtype=bool)
    rc = np.clip(rho, spec.eps_clip, 1.0 - spec.eps_clip)
    return rc, rc != rho


def _f1_derivs(spec: PotentialSpec, r, order: int):
    c = spec.c_hat
    if spec.smooth:
        return P.polyval(r, P.polyder(spec.f1_smooth_coeffs, order) if order else spec.f1_smooth_coeffs)
    if order == 0:
        return c * (r * np.log(r) + (1 - r) * np.log(1 - r))
    if order == 1:
        return c * np.log(r / (1 - r))
    if order == 2:
        return c * (1 / r + 1 / (1 - r))
    return c * (-1 / r**2 + 1 / (1 - r) ** 2)


def _F(spec, rho, order, with_flag=False):
    rc, fired = clamp(spec, rho)
    coeffs = P.polyder(spec.f2_coeffs, order) if order else spec.f2_coeffs
    val = _f1_derivs(spec, rc, order) + P.polyval(rc, coeffs)
    return (val, fired) if with_flag else val


def F_eval(spec: PotentialSpec, rho, with_flag: bool = False):
    return _F(spec, rho, 0, with_flag)


def F_prime(spec: PotentialSpec, rho, with_flag: bool = False):
    return _F(spec, rho, 1, with_flag)


def F_second(spec: PotentialSpec, rho, with_flag: bool = False):
    return _F(spec, rho, 2, with_flag)


def F_third(spec: PotentialSpec, rho, with_flag: bool = False):
    return _F(spec, rho, 3, with_flag)


def F1_prime(spec: PotentialSpec, rho):
    rc, _ = clamp(spec, rho)
    return _f1_derivs(spec, rc, 1)


def F1_second(spec: PotentialSpec, rho):
    rc, _ = clamp(spec, rho)
    return _f1_derivs(spec, rc, 2)


def g_eval(spec: PotentialSpec, rho):
    return P.polyval(_reject_nan(rho), spec.g_coeffs)


def g_prime(spec: PotentialSpec, rho):
    return P.polyval(_reject_nan(rho), P.polyder(spec.g_coeffs, 1))


def g_second(spec: PotentialSpec, rho):
    return P.polyval(_reject_nan(rho), P.polyder(spec.g_coeffs, 2))


@dataclass
class AuditItem:
    name: str
    passed: bool
    witness: float | None = None
    note: str = ""


@dataclass
class AuditReport:
    items: list[AuditItem] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(i.passed for i in self.items)

    def __getitem__(self, name: str) -> AuditItem:
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)


def audit_assumptions(spec: PotentialSpec, samples: int = 1001) -> AuditReport:
    """Sampled checks of the structural hypotheses on F and g.

    Failures are reported with the first witnessing argument, never raised.
    """
    r = np.linspace(0.0, 1.0, samples)
    interior = r[1:-1]
    report = AuditReport()

    def first_bad(mask, pts):
        idx = np.flatnonzero(mask)
        return float(pts[idx[0]]) if idx.size else None

    w = first_bad(~(g_eval(spec, r) >= 0), r)
    report.items.append(AuditItem("g_nonnegative", w is None, w))
    w = first_bad(~(g_second(spec, r) <= 0), r)
    report.items.append(AuditItem("g_concave", w is None, w))
    w = first_bad(~(F1_second(spec, interior) >= 0), interior)
    report.items.append(AuditItem("F1_convex", w is None, w))
    if spec.smooth:
        report.items.append(AuditItem(
            "F1_singular_endpoints", False, None,
            note="smooth mode replaces the logarithm by a polynomial"))
    else:
        lo = _f1_derivs(spec, 1e-300, 1)
        hi = _f1_derivs(spec, 1 - 1e-16, 1)
        ok = lo < -100 * spec.c_hat and hi > 30 * spec.c_hat
        report.items.append(AuditItem("F1_singular_endpoints", bool(ok), None if ok else 0.0))
    report.items.append(AuditItem("c_hat_positive", spec.c_hat > 0, None))
    return report
