"""Mean-field ODE for the fractions (b, g) of wholly/semi-infected vertices.

    b' = -b + lam*b*g
    g' = -g - lam*b*g + lam*b*(1 - b - g)

The triangle {b >= 0, g >= 0, b + g <= 1} is invariant; integration
fails loudly instead of clamping when a step leaves it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .chain import DomainError

REGION_TOL = 1e-9
RESIDUAL_TOL = 1e-10
CRITICAL_TOL = 1e-12
DEFAULT_STEP = 1e-3
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


class IntegrationError(RuntimeError):
    """The numerical path left the invariant triangle."""


class OdeState(NamedTuple):
    b: float
    g: float

    def in_region(self, tol: float = REGION_TOL) -> bool:
        return self.b >= -tol and self.g >= -tol and self.b + self.g <= 1.0 + tol


@dataclass
class OdePath:
    step: float
    states: np.ndarray  # shape (m, 2)
    t_end: float

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self.states)) * self.step

    @property
    def b(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def g(self) -> np.ndarray:
        return self.states[:, 1]

    def final(self) -> OdeState:
        return OdeState(*map(float, self.states[-1]))

    def at(self, t: float) -> OdeState:
        """Linear interpolation between grid points."""
        b = np.interp(t, self.times, self.b)
        g = np.interp(t, self.times, self.g)
        return OdeState(float(b), float(g))


@dataclass(frozen=True)
class EquilibriumSet:
    points: list[OdeState]
    critical: bool


@dataclass(frozen=True)
class DecayEnvelope:
    g_star: float
    g_tilde: float
    b_argmax: float


def vector_field(state, lam: float) -> tuple[float, float]:
    b, g = state
    return -b + lam * b * g, -g - lam * b * g + lam * b * (1.0 - b - g)


def integrate(init, lam: float, t_end: float, step: float = DEFAULT_STEP) -> OdePath:
    """Classical RK4 with a fixed step.

    The step is shrunk slightly, if needed, so that a whole number of
    steps lands exactly on ``t_end``.
    """
    init = OdeState(*map(float, init))
    if not init.in_region():
        raise DomainError(f"initial state {tuple(init)} outside the triangle")
    if not (t_end > 0 and 0 < step <= 1e-2):
        raise DomainError("need t_end > 0 and 0 < step <= 1e-2")
    m = max(1, math.ceil(t_end / step - 1e-9))
    h = t_end / m
    out = np.empty((m + 1, 2))
    b, g = init
    out[0] = init
    f = vector_field
    for i in range(1, m + 1):
        k1b, k1g = f((b, g), lam)
        k2b, k2g = f((b + 0.5 * h * k1b, g + 0.5 * h * k1g), lam)
        k3b, k3g = f((b + 0.5 * h * k2b, g + 0.5 * h * k2g), lam)
        k4b, k4g = f((b + h * k3b, g + h * k3g), lam)
        b += (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        g += (h / 6.0) * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        if not (b >= -REGION_TOL and g >= -REGION_TOL and b + g <= 1.0 + REGION_TOL):
            raise IntegrationError(f"left the triangle at t={i * h:.6g}: ({b}, {g}); reduce the step")
        out[i] = b, g
    return OdePath(step=h, states=out, t_end=float(t_end))


def equilibria(lam: float) -> EquilibriumSet:
    """Zeros of the vector field, from the reduced quadratic.

    F1 = 0 with b > 0 forces g = 1/lam, and then F2 = 0 becomes
    lam*b^2 - (lam - 2)*b + 1/lam = 0.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")
    disc = (lam - 2.0) ** 2 - 4.0
    points = [OdeState(0.0, 0.0)]
    critical = abs(disc) <= CRITICAL_TOL
    if critical:
        points.append(OdeState((lam - 2.0) / (2.0 * lam), 1.0 / lam))
    elif disc > 0 and lam > 2.0:
        root = math.sqrt(disc)
        for sign in (-1.0, 1.0):
            points.append(OdeState(((lam - 2.0) + sign * root) / (2.0 * lam), 1.0 / lam))
    points.sort(key=lambda p: p.b)
    return EquilibriumSet(points, critical)


def _golden_max(f, lo: float, hi: float, tol: float = 1e-13) -> float:
    a, c = lo, hi
    x1 = c - _INV_PHI * (c - a)
    x2 = a + _INV_PHI * (c - a)
    f1, f2 = f(x1), f(x2)
    while c - a > tol:
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INV_PHI * (c - a)
            f2 = f(x2)
        else:
            c, x2, f2 = x2, x1, f1
            x1 = c - _INV_PHI * (c - a)
            f1 = f(x1)
    return 0.5 * (a + c)


def decay_envelope_params(lam: float) -> DecayEnvelope:
    """Largest g on the nullcline F2 = 0, i.e. max of lam*b*(1-b)/(2*lam*b+1).

    Grid scan, then golden-section refinement around the best cell.
    """
    if not lam > 0:
        raise DomainError("lambda must be positive")

    def nullcline(b):
        return lam * b * (1.0 - b) / (2.0 * lam * b + 1.0)

    grid = np.linspace(0.0, 1.0, 10_001)
    k = int(np.argmax(nullcline(grid)))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    b_best = _golden_max(nullcline, lo, hi)
    g_star = float(nullcline(b_best))
    return DecayEnvelope(g_star=g_star, g_tilde=0.5 * (1.0 / lam + g_star), b_argmax=float(b_best))


def decay_envelope(lam: float, t) -> tuple:
    """Upper bounds on (b_t, g_t) from (1, 0) for lam < 4."""
    if not 0 < lam < 4:
        raise DomainError("decay envelopes need 0 < lambda < 4")
    gt = decay_envelope_params(lam).g_tilde
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    growth = np.exp((lam * gt - 1.0) * t)
    b_bound = growth
    g_bound = (growth - np.exp(-t)) / gt
    if b_bound.ndim == 0:
        return float(b_bound), float(g_bound)
    return b_bound, g_bound
