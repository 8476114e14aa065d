"""Supercritical box design and the two auxiliary birth-death chains.

For lam > 4 the design picks a pivot (b0, g0) where both components of
the mean-field drift are positive, a relative half-width ``alpha`` for
a box around it (in (b, b+g) coordinates), and the constant rates of a
walk (B^, S^) that minorises (B, B+G) while the chain stays in the box.

For the subcritical side, ``simulate_tilde`` runs the linear
birth-death chain with death rate x and birth rate theta*x/(theta+3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numba as nb
import numpy as np
from scipy import stats

from .chain import Counts, DomainError
from .meanfield import vector_field
from .rng import RngStream, next_exponential, next_uniform, seed_state

ALPHA_GRID = tuple(0.5 * 2.0**-k for k in range(21))


class InfeasibleDesign(ValueError):
    """No admissible (beta, alpha) for the requested infection rate."""


class InfeasibleBeta(InfeasibleDesign):
    pass


class InfeasibleAlpha(InfeasibleDesign):
    pass


class Box(NamedTuple):
    b_min: float
    b_max: float
    s_min: float
    s_max: float

    def contains(self, b: float, s: float, tol: float = 0.0) -> bool:
        return (
            self.b_min - tol <= b <= self.b_max + tol
            and self.s_min - tol <= s <= self.s_max + tol
        )


@dataclass(frozen=True)
class SurvivalDesign:
    lam: float
    beta: float
    alpha: float
    b0: float
    g0: float
    g_lo: float
    g_hi: float
    box: Box
    D: float
    T4: float
    q1: float
    q2: float
    rho: float
    C6: float

    @property
    def s0(self) -> float:
        return self.b0 + self.g0

    def initial_counts(self, n: int) -> tuple[int, int]:
        """Floored (B, B+G) start shared by the chain and the minorant."""
        return (int(math.floor(n * self.b0 + 1e-9)), int(math.floor(n * self.s0 + 1e-9)))

    def in_region(self, b: int, s: int, n: int) -> bool:
        tol = 1e-9
        return (
            b >= n * self.box.b_min - tol
            and b <= n * self.box.b_max + tol
            and s >= n * self.box.s_min - tol
            and s <= n * self.box.s_max + tol
        )


def default_beta(lam: float) -> float:
    return 0.02 * (lam - 4.0) / lam


def pivot_point(lam: float, beta: float) -> tuple[float, float]:
    if not lam > 4:
        raise DomainError("the pivot exists only for lambda > 4")
    b0 = (lam - 2.0) / (2.0 * lam)
    g0 = 1.0 / lam + beta
    f1, f2 = vector_field((b0, g0), lam)
    if not (beta > 0 and f1 > 0 and f2 > 0 and b0 > 0 and g0 > 0 and b0 + g0 < 1):
        raise InfeasibleBeta(
            f"beta={beta} gives pivot ({b0}, {g0}) with drift ({f1}, {f2}); need both > 0"
        )
    return b0, g0


def _design_terms(lam, alpha, b0, g0):
    s0 = b0 + g0
    g_lo = (1 - alpha) * s0 - (1 + alpha) * b0
    g_hi = (1 + alpha) * s0 - (1 - alpha) * b0
    q1 = lam * (1 - alpha) * b0 * (1 - (1 + alpha) * s0)
    q2 = (1 + alpha) * b0 + g_hi
    return g_lo, g_hi, q1, q2


def alpha_violations(lam: float, beta: float, alpha: float) -> list[str]:
    """Which admissibility conditions fail for this alpha (empty = fine)."""
    b0, g0 = pivot_point(lam, beta)
    g_lo, g_hi, q1, q2 = _design_terms(lam, alpha, b0, g0)
    bad = []
    if not alpha > 0:
        bad.append("alpha must be positive")
    for scale in (1 - alpha, 1 + alpha):
        b, g = scale * b0, scale * g0
        if not (b > 0 and g > 0 and b + g < 1):
            bad.append(f"({scale}*b0, {scale}*g0) not interior")
    if not (g_lo > 0 and g_hi > 0):
        bad.append("g_lo and g_hi must be positive")
    # first inequality divided through by b0
    lhs1, rhs1 = lam * (1 - alpha) * g_lo, 1 + alpha
    if not lhs1 > rhs1:
        bad.append(f"promotion bound {lhs1:.6g} <= B-death bound {rhs1:.6g}")
    rhs2 = g_hi + lam * (1 + alpha) * b0 * g_hi
    if not q1 > rhs2:
        bad.append(f"seeding bound {q1:.6g} <= {rhs2:.6g}")
    if not q1 > q2:
        bad.append("q1 <= q2")
    return bad


def box_distance(b0: float, g0: float, box: Box, points: int = 4001) -> float:
    """l1 distance in (b, g) from the pivot to the boundary of the box.

    The box is a parallelogram in (b, g); each edge is scanned on a
    grid, with the kinks of |b - b0| + |g - g0| added to the candidates
    so the piecewise-linear minimum is hit exactly.
    """
    best = math.inf
    u = np.linspace(0.0, 1.0, points)
    # b-faces: b fixed, s ranges; g = s - b
    for b in (box.b_min, box.b_max):
        s = np.concatenate([box.s_min + u * (box.s_max - box.s_min), [b + g0]])
        s = s[(s >= box.s_min) & (s <= box.s_max)]
        best = min(best, float(np.min(np.abs(b - b0) + np.abs(s - b - g0))))
    # s-faces: s fixed, b ranges
    for s in (box.s_min, box.s_max):
        b = np.concatenate([box.b_min + u * (box.b_max - box.b_min), [b0, s - g0]])
        b = b[(b >= box.b_min) & (b <= box.b_max)]
        best = min(best, float(np.min(np.abs(b - b0) + np.abs(s - b - g0))))
    return best


def _build(lam, beta, alpha) -> SurvivalDesign:
    b0, g0 = pivot_point(lam, beta)
    s0 = b0 + g0
    g_lo, g_hi, q1, q2 = _design_terms(lam, alpha, b0, g0)
    box = Box((1 - alpha) * b0, (1 + alpha) * b0, (1 - alpha) * s0, (1 + alpha) * s0)
    D = box_distance(b0, g0, box)
    rho = math.sqrt(q2 / q1)
    C6 = q1 + q2 - q1 * rho - q2 / rho
    design = SurvivalDesign(
        lam=lam, beta=beta, alpha=alpha, b0=b0, g0=g0, g_lo=g_lo, g_hi=g_hi, box=box,
        D=D, T4=D / (4.0 * (1.0 + lam)), q1=q1, q2=q2, rho=rho, C6=C6,
    )
    _check(design)
    return design


def _check(d: SurvivalDesign):
    problems = []
    if not (d.D > 0 and d.T4 > 0):
        problems.append("D must be positive")
    if not (d.q2 / d.q1 < d.rho < 1):
        problems.append("rho outside (q2/q1, 1)")
    if not d.C6 > 0:
        problems.append("C6 must be positive")
    if problems:
        raise InfeasibleDesign("; ".join(problems))


def design_survival(lam: float, beta: float | None = None, alpha: float | None = None) -> SurvivalDesign:
    if not lam > 4:
        raise InfeasibleDesign(f"survival design needs lambda > 4, got {lam}")
    if beta is None:
        beta = default_beta(lam)
    pivot_point(lam, beta)
    if alpha is not None:
        bad = alpha_violations(lam, beta, alpha)
        if bad:
            raise InfeasibleAlpha(f"alpha={alpha}: " + "; ".join(bad))
        return _build(lam, beta, alpha)
    for a in ALPHA_GRID:
        if not alpha_violations(lam, beta, a):
            return _build(lam, beta, a)
    raise InfeasibleDesign(f"no feasible alpha on the grid for lambda={lam}, beta={beta}")


# --------------------------------------------------------------------------
# minorant walk (B^, S^)


class HatRates(NamedTuple):
    d_joint: float  # (B^, S^) -> (B^ - 1, S^ - 1)
    d_s: float  # S^ -> S^ - 1
    b_birth: float  # B^ -> B^ + 1
    s_birth: float  # S^ -> S^ + 1


HAT_DB = np.array([-1, 0, 1, 0], dtype=np.int64)
HAT_DS = np.array([-1, -1, 0, 1], dtype=np.int64)


class HatState(NamedTuple):
    bhat: int
    shat: int


def hat_rates(design: SurvivalDesign, n: int) -> HatRates:
    d = design
    return HatRates(
        n * (1 + d.alpha) * d.b0,
        n * d.g_hi,
        d.lam * n * (1 - d.alpha) * d.b0 * d.g_lo,
        d.lam * n * (1 - d.alpha) * d.b0 * (1 - (1 + d.alpha) * d.s0),
    )


def hat_growth_probability(design: SurvivalDesign, n: int, t: float) -> float:
    """Exact P(B^_t >= B^_0 and S^_t >= S^_0).

    The four event counts by time t are independent Poisson variables;
    condition on the number k of joint deaths, which lowers both
    coordinates.
    """
    r = hat_rates(design, n)
    mj, ms, mb, msb = (x * t for x in r)
    if mj == 0.0:
        return 1.0
    k = np.arange(int(mj + 12 * math.sqrt(mj) + 20) + 1)
    p_joint = stats.poisson.pmf(k, mj)
    p_b = stats.poisson.sf(k - 1, mb)
    p_s = stats.skellam.sf(k - 1, msb, ms) if ms > 0 else stats.poisson.sf(k - 1, msb)
    return float(np.sum(p_joint * p_b * p_s))


@nb.njit(cache=True)
def _pick4(u, r):
    target = u * (r[0] + r[1] + r[2] + r[3])
    acc = 0.0
    for k in range(4):
        acc += r[k]
        if target <= acc and r[k] > 0.0:
            return k
    for k in range(3, -1, -1):
        if r[k] > 0.0:
            return k
    return 0


@nb.njit(cache=True)
def hat_kernel(bh, sh, rates, horizon, state):
    total = rates[0] + rates[1] + rates[2] + rates[3]
    times = [0.0]
    bs = [bh]
    ss = [sh]
    t = 0.0
    while total > 0.0:
        dt = next_exponential(state, total)
        if t + dt > horizon:
            break
        t += dt
        k = _pick4(next_uniform(state), rates)
        bh += HAT_DB[k]
        sh += HAT_DS[k]
        times.append(t)
        bs.append(bh)
        ss.append(sh)
    return np.array(times), np.array(bs), np.array(ss)


@nb.njit(cache=True, nogil=True)
def hat_at_batch(bh0, sh0, rates, t_end, seed, first, replicas):
    out = np.empty((replicas, 2), dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    total = rates[0] + rates[1] + rates[2] + rates[3]
    for r in range(replicas):
        seed_state(seed, first + r, state)
        bh = bh0
        sh = sh0
        t = 0.0
        while total > 0.0:
            dt = next_exponential(state, total)
            if t + dt > t_end:
                break
            t += dt
            k = _pick4(next_uniform(state), rates)
            bh += HAT_DB[k]
            sh += HAT_DS[k]
        out[r, 0] = bh
        out[r, 1] = sh
    return out


@dataclass
class HatTrajectory:
    times: np.ndarray
    bhat: np.ndarray
    shat: np.ndarray

    def final(self) -> HatState:
        return HatState(int(self.bhat[-1]), int(self.shat[-1]))


def simulate_hat(design: SurvivalDesign, n: int, horizon: float, rng: RngStream) -> HatTrajectory:
    """Constant-rate walk from the floored pivot; it may leave [0, n]."""
    if horizon < 0:
        raise DomainError("horizon must be nonnegative")
    bh, sh = design.initial_counts(n)
    rates = np.array(hat_rates(design, n))
    times, bs, ss = hat_kernel(bh, sh, rates, float(horizon), rng.state)
    return HatTrajectory(times, bs.astype(np.int64), ss.astype(np.int64))


# --------------------------------------------------------------------------
# subcritical envelope chain


@dataclass(frozen=True)
class TildeParams:
    theta: float
    n0: int

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise DomainError("theta must lie in (0, 1] (1 only for diagnostics)")
        if self.n0 < 0:
            raise DomainError("initial value must be nonnegative")


def tilde_rates(value: int, theta: float) -> tuple[float, float]:
    if value < 0:
        raise DomainError("value must be nonnegative")
    return float(value), theta * value / (theta + 3.0)


def tilde_mean(t: float, n: int, theta: float) -> float:
    if not theta > 0:
        raise DomainError("theta must be positive")
    return n * math.exp(-3.0 * t / (theta + 3.0))


def tilde_extinction_bound(n: int, theta: float) -> float:
    """Guaranteed extinction probability by time (1 + theta/2) * log(n)."""
    if n < 1 or not theta > 0:
        raise DomainError("need n >= 1 and theta > 0")
    return 1.0 - n ** (-theta / (2.0 * theta + 6.0))


def tilde_horizon(n: int, theta: float) -> float:
    return (1.0 + theta / 2.0) * math.log(n)


@nb.njit(cache=True)
def tilde_kernel(x, theta, horizon, state):
    times = [0.0]
    xs = [x]
    t = 0.0
    ext = 0.0 if x == 0 else -1.0
    p_birth = theta / (theta + 3.0) / (1.0 + theta / (theta + 3.0))
    while x > 0:
        dt = next_exponential(state, x * (1.0 + theta / (theta + 3.0)))
        if t + dt > horizon:
            break
        t += dt
        if next_uniform(state) <= p_birth:
            x += 1
        else:
            x -= 1
        times.append(t)
        xs.append(x)
        if x == 0:
            ext = t
    return np.array(times), np.array(xs), ext


@nb.njit(cache=True, nogil=True)
def tilde_batch(x0, theta, probe_times, horizon, seed, first, replicas):
    """Values at the (sorted) probe times and extinction times (NaN if alive)."""
    m = probe_times.shape[0]
    values = np.zeros((replicas, m), dtype=np.int64)
    ext = np.empty(replicas)
    state = np.empty(4, dtype=np.uint64)
    up = theta / (theta + 3.0)
    p_birth = up / (1.0 + up)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        x = x0
        t = 0.0
        j = 0
        ext[r] = 0.0 if x == 0 else np.nan
        while x > 0:
            dt = next_exponential(state, x * (1.0 + up))
            t_next = t + dt
            while j < m and probe_times[j] < t_next:
                values[r, j] = x
                j += 1
            if t_next > horizon:
                break
            t = t_next
            if next_uniform(state) <= p_birth:
                x += 1
            else:
                x -= 1
            if x == 0:
                ext[r] = t
        # probes after extinction (or past the horizon) keep the last value
        while j < m:
            values[r, j] = x
            j += 1
    return values, ext


@dataclass
class TildeTrajectory:
    times: np.ndarray
    values: np.ndarray
    extinction_time: float | None


def simulate_tilde(params: TildeParams, horizon: float, rng: RngStream) -> TildeTrajectory:
    times, xs, ext = tilde_kernel(params.n0, float(params.theta), float(horizon), rng.state)
    return TildeTrajectory(times, xs.astype(np.int64), None if ext < 0 else float(ext))


def small_region_threshold(lam: float, theta: float) -> float:
    """Fraction below which promotions are dominated by the tilde chain."""
    return theta / ((3.0 + theta) * lam)


def initial_hat_state(design: SurvivalDesign, n: int) -> HatState:
    return HatState(*design.initial_counts(n))


def chain_counts_at_pivot(design: SurvivalDesign, n: int) -> Counts:
    b, s = design.initial_counts(n)
    return Counts(b, s - b)
