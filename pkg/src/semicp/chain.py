"""Exact event-driven simulation of the semi-infected contact process.

Two simulators live here.  ``simulate`` runs the lumped chain on the
counts (B, G) of wholly- and semi-infected vertices.  ``simulate_full``
runs the per-vertex {0, 1, 2}^n process straight from its single-spin
flip rates and lumps afterwards; it exists as an independent oracle for
the lumped rate table.

Both use competing exponentials: one uniform for the holding time
(``-log(u) / R``) and one uniform to pick the event, scanning the rates
in the fixed order RecoverWhole, RecoverSemi, Promote, Seed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numba as nb
import numpy as np

from .rng import RngStream, next_uniform, seed_state

FULL_CAPACITY = 2**16


class DomainError(ValueError):
    """A state or parameter outside the model's domain."""


class CapacityError(ValueError):
    """Population too large for the per-vertex simulator."""


@dataclass(frozen=True)
class ModelParams:
    n: int
    lam: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            raise DomainError(f"infection rate must be finite and positive, got {self.lam!r}")


class Counts(NamedTuple):
    b: int
    g: int

    def check(self, params: ModelParams) -> "Counts":
        if self.b < 0 or self.g < 0 or self.b + self.g > params.n:
            raise DomainError(f"invalid counts {tuple(self)} for n={params.n}")
        return self

    @classmethod
    def from_fractions(cls, b: float, g: float, n: int) -> "Counts":
        # floor with a guard against 0.52 * 2000 = 1039.9999...
        return cls(int(math.floor(n * b + 1e-9)), int(math.floor(n * g + 1e-9)))


class RateVector(NamedTuple):
    recover_whole: float
    recover_semi: float
    promote: float
    seed: float

    @property
    def total(self) -> float:
        return self.recover_whole + self.recover_semi + self.promote + self.seed


class EventKind(enum.IntEnum):
    RecoverWhole = 0
    RecoverSemi = 1
    Promote = 2
    Seed = 3

    @property
    def delta(self) -> tuple[int, int]:
        return _DELTAS[self]


_DELTAS = {
    EventKind.RecoverWhole: (-1, 0),
    EventKind.RecoverSemi: (0, -1),
    EventKind.Promote: (1, -1),
    EventKind.Seed: (0, 1),
}
DELTA_B = np.array([-1, 0, 1, 0], dtype=np.int64)
DELTA_G = np.array([0, -1, -1, 1], dtype=np.int64)


class Absorbed:
    """Returned by :func:`step` at (0, 0), where every rate vanishes."""

    def __repr__(self):
        return "ABSORBED"


ABSORBED = Absorbed()


class Step(NamedTuple):
    dt: float
    event: EventKind
    next: Counts


@dataclass
class Trajectory:
    """Event-stamped path of the lumped counts.

    ``tau`` is the first time with no wholly-infected vertex; it and
    ``censored`` are exact even when the stored path is subsampled.
    """

    times: np.ndarray
    b: np.ndarray
    g: np.ndarray
    tau: float | None
    censored: bool
    seed_used: int
    replica_index: int = 0
    record_every: int = 1

    @property
    def states(self) -> list[Counts]:
        return [Counts(int(b), int(g)) for b, g in zip(self.b, self.g)]

    def __len__(self):
        return len(self.times)

    def final(self) -> Counts:
        return Counts(int(self.b[-1]), int(self.g[-1]))


def transition_rates(counts: Counts, params: ModelParams) -> RateVector:
    b, g = Counts(*counts).check(params)
    c = params.lam / params.n
    return RateVector(float(b), float(g), c * b * g, c * b * (params.n - b - g))


def apply_event(counts: Counts, event: EventKind, n: int | None = None) -> Counts:
    event = EventKind(event)
    db, dg = event.delta
    b, g = counts[0] + db, counts[1] + dg
    # seeding needs a wholly-infected vertex even though the delta alone would be valid
    if b < 0 or g < 0 or (n is not None and b + g > n) or (event == EventKind.Seed and counts[0] == 0):
        raise DomainError(f"{event.name} not possible from {tuple(counts)}")
    return Counts(b, g)


# --------------------------------------------------------------------------
# compiled kernels


@nb.njit(cache=True)
def _pick(u, r0, r1, r2, r3, total):
    target = u * total
    acc = r0
    if target <= acc and r0 > 0.0:
        return 0
    acc += r1
    if target <= acc and r1 > 0.0:
        return 1
    acc += r2
    if target <= acc and r2 > 0.0:
        return 2
    if r3 > 0.0:
        return 3
    # rounding at the top end: fall back to the last positive rate
    if r2 > 0.0:
        return 2
    if r1 > 0.0:
        return 1
    return 0


@nb.njit(cache=True)
def step_kernel(b, g, n, lam, state):
    """One competing-exponentials step.  Returns (dt, kind); kind -1 = absorbed."""
    c = lam / n
    r0 = float(b)
    r1 = float(g)
    r2 = c * b * g
    r3 = c * b * (n - b - g)
    total = r0 + r1 + r2 + r3
    if total <= 0.0:
        return 0.0, -1
    dt = -np.log(next_uniform(state)) / total
    k = _pick(next_uniform(state), r0, r1, r2, r3, total)
    return dt, k


@nb.njit(cache=True)
def simulate_kernel(b, g, n, lam, horizon, state, stop_at_tau, every):
    cap = 1024
    times = np.empty(cap)
    bs = np.empty(cap, dtype=np.int64)
    gs = np.empty(cap, dtype=np.int64)
    times[0] = 0.0
    bs[0] = b
    gs[0] = g
    m = 1
    t = 0.0
    tau = -1.0
    if b == 0:
        tau = 0.0
    count = 0
    while True:
        if b == 0 and stop_at_tau:
            break
        dt, k = step_kernel(b, g, n, lam, state)
        if k < 0 or t + dt > horizon:
            break
        t += dt
        b += DELTA_B[k]
        g += DELTA_G[k]
        count += 1
        hit = b == 0 and tau < 0.0
        if hit:
            tau = t
        if hit or count % every == 0:
            if m == cap:
                cap *= 2
                times = _grow_f(times, cap)
                bs = _grow_i(bs, cap)
                gs = _grow_i(gs, cap)
            times[m] = t
            bs[m] = b
            gs[m] = g
            m += 1
    return times[:m].copy(), bs[:m].copy(), gs[:m].copy(), tau


@nb.njit(cache=True)
def _grow_f(a, cap):
    out = np.empty(cap)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True)
def _grow_i(a, cap):
    out = np.empty(cap, dtype=np.int64)
    out[: a.shape[0]] = a
    return out


@nb.njit(cache=True, nogil=True)
def tau_batch(n, lam, b0, g0, horizon, seed, first, replicas):
    """Extinction times of ``replicas`` runs; NaN marks a censored run.

    Replica ``r`` uses the stream (seed, first + r) and follows the same
    draws as :func:`simulate`.
    """
    out = np.empty(replicas)
    state = np.empty(4, dtype=np.uint64)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        b = b0
        g = g0
        t = 0.0
        out[r] = np.nan
        if b == 0:
            out[r] = 0.0
            continue
        while True:
            dt, k = step_kernel(b, g, n, lam, state)
            if k < 0 or t + dt > horizon:
                break
            t += dt
            b += DELTA_B[k]
            g += DELTA_G[k]
            if b == 0:
                out[r] = t
                break
    return out


@nb.njit(cache=True, nogil=True)
def counts_at_batch(n, lam, b0, g0, t_end, seed, first, replicas):
    """Counts at time ``t_end`` (running on past extinction)."""
    out = np.empty((replicas, 2), dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        b = b0
        g = g0
        t = 0.0
        while True:
            dt, k = step_kernel(b, g, n, lam, state)
            if k < 0 or t + dt > t_end:
                break
            t += dt
            b += DELTA_B[k]
            g += DELTA_G[k]
        out[r, 0] = b
        out[r, 1] = g
    return out


@nb.njit(cache=True, nogil=True)
def max_mass_batch(n, lam, b0, g0, t_from, t_to, seed, first, replicas):
    """Largest (B + G) / n seen on [t_from, t_to], running past extinction."""
    out = np.empty(replicas)
    state = np.empty(4, dtype=np.uint64)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        b = b0
        g = g0
        t = 0.0
        worst = -1.0
        while True:
            dt, k = step_kernel(b, g, n, lam, state)
            if k < 0 or t + dt > t_to:
                break
            t += dt
            if t >= t_from and worst < 0.0:
                # mass held on [t_from, t)
                worst = (b + g) / n
            b += DELTA_B[k]
            g += DELTA_G[k]
            if t >= t_from and (b + g) / n > worst:
                worst = (b + g) / n
        if worst < 0.0 or (b + g) / n > worst:
            worst = max(worst, (b + g) / n)
        out[r] = worst
    return out


@nb.njit(cache=True)
def _interp(path_b, path_g, step, t):
    x = t / step
    i = int(x)
    last = path_b.shape[0] - 1
    if i >= last:
        return path_b[last], path_g[last]
    w = x - i
    return (1.0 - w) * path_b[i] + w * path_b[i + 1], (1.0 - w) * path_g[i] + w * path_g[i + 1]


@nb.njit(cache=True, nogil=True)
def sup_deviation_batch(n, lam, b0, g0, t_end, path_b, path_g, step, seed, first, replicas):
    """Sup over [0, t_end] of the l1 gap between (B/n, G/n) and an ODE path.

    The path is piecewise constant, so the gap is checked at every
    event time on both sides of the jump and at ``t_end``.
    """
    out = np.empty(replicas)
    state = np.empty(4, dtype=np.uint64)
    inv = 1.0 / n
    for r in range(replicas):
        seed_state(seed, first + r, state)
        b = b0
        g = g0
        t = 0.0
        ob, og = _interp(path_b, path_g, step, 0.0)
        worst = abs(b * inv - ob) + abs(g * inv - og)
        while True:
            dt, k = step_kernel(b, g, n, lam, state)
            if k < 0 or t + dt > t_end:
                break
            t += dt
            ob, og = _interp(path_b, path_g, step, t)
            d = abs(b * inv - ob) + abs(g * inv - og)
            if d > worst:
                worst = d
            b += DELTA_B[k]
            g += DELTA_G[k]
            d = abs(b * inv - ob) + abs(g * inv - og)
            if d > worst:
                worst = d
        ob, og = _interp(path_b, path_g, step, t_end)
        d = abs(b * inv - ob) + abs(g * inv - og)
        if d > worst:
            worst = d
        out[r] = worst
    return out


@nb.njit(cache=True)
def full_step_kernel(spins, n, lam, state):
    """One step of the per-vertex process.  Returns (dt, vertex, new_level)."""
    n2 = 0
    for i in range(n):
        if spins[i] == 2:
            n2 += 1
    infect = lam * n2 / n
    total = 0.0
    for i in range(n):
        if spins[i] != 0:
            total += 1.0
        if spins[i] != 2:
            total += infect
    if total <= 0.0:
        return 0.0, -1, -1
    dt = -np.log(next_uniform(state)) / total
    target = next_uniform(state) * total
    acc = 0.0
    last_i = -1
    last_l = -1
    for i in range(n):
        for l in range(3):
            s = spins[i]
            if l == 0 and s != 0:
                h = 1.0
            elif l == 2 and s == 1:
                h = infect
            elif l == 1 and s == 0:
                h = infect
            else:
                h = 0.0
            if h > 0.0:
                acc += h
                last_i = i
                last_l = l
                if target <= acc:
                    return dt, i, l
    return dt, last_i, last_l


@nb.njit(cache=True)
def full_counts(spins):
    b = 0
    g = 0
    for s in spins:
        if s == 2:
            b += 1
        elif s == 1:
            g += 1
    return b, g


@nb.njit(cache=True)
def simulate_full_kernel(spins, n, lam, horizon, state, stop_at_tau):
    b, g = full_counts(spins)
    times = [0.0]
    bs = [b]
    gs = [g]
    t = 0.0
    tau = 0.0 if b == 0 else -1.0
    while not (b == 0 and stop_at_tau):
        dt, i, l = full_step_kernel(spins, n, lam, state)
        if i < 0 or t + dt > horizon:
            break
        t += dt
        spins[i] = l
        b, g = full_counts(spins)
        times.append(t)
        bs.append(b)
        gs.append(g)
        if b == 0 and tau < 0.0:
            tau = t
    return np.array(times), np.array(bs), np.array(gs), tau


@nb.njit(cache=True, nogil=True)
def full_counts_at_batch(init_spins, lam, t_end, seed, first, replicas):
    n = init_spins.shape[0]
    out = np.empty((replicas, 2), dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    spins = np.empty(n, dtype=np.int64)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        spins[:] = init_spins
        t = 0.0
        while True:
            dt, i, l = full_step_kernel(spins, n, lam, state)
            if i < 0 or t + dt > t_end:
                break
            t += dt
            spins[i] = l
        b, g = full_counts(spins)
        out[r, 0] = b
        out[r, 1] = g
    return out


# --------------------------------------------------------------------------
# public operations


def step(counts: Counts, params: ModelParams, rng: RngStream) -> Step | Absorbed:
    b, g = Counts(*counts).check(params)
    dt, k = step_kernel(b, g, params.n, float(params.lam), rng.state)
    if k < 0:
        return ABSORBED
    event = EventKind(int(k))
    return Step(float(dt), event, apply_event(Counts(b, g), event, params.n))


def simulate(
    params: ModelParams,
    init: Counts,
    horizon: float,
    rng: RngStream,
    record_every: int = 1,
    stop_at_tau: bool = True,
) -> Trajectory:
    """Run the lumped chain until B hits 0 or time passes ``horizon``.

    With ``record_every=k`` only every k-th event (plus the extinction
    event) is stored.  ``stop_at_tau=False`` keeps running the
    semi-infected decay after extinction; the default stops at tau.
    """
    b, g = Counts(*init).check(params)
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    if record_every < 1:
        raise DomainError("record_every must be >= 1")
    times, bs, gs, tau = simulate_kernel(
        b, g, params.n, float(params.lam), float(horizon), rng.state, stop_at_tau, record_every
    )
    return Trajectory(
        times=times,
        b=bs,
        g=gs,
        tau=None if tau < 0 else float(tau),
        censored=tau < 0,
        seed_used=rng.master_seed,
        replica_index=rng.replica_index,
        record_every=record_every,
    )


class FullConfiguration:
    """Per-vertex spins over {0: healthy, 1: semi-infected, 2: wholly-infected}."""

    def __init__(self, spins: Sequence[int]):
        arr = np.asarray(spins, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise DomainError("spins must be a non-empty 1-d sequence")
        if np.any((arr < 0) | (arr > 2)):
            raise DomainError("spins must take values in {0, 1, 2}")
        self.spins = arr

    @classmethod
    def from_counts(cls, counts: Counts, n: int) -> "FullConfiguration":
        b, g = counts
        if b < 0 or g < 0 or b + g > n:
            raise DomainError(f"invalid counts {tuple(counts)} for n={n}")
        return cls([2] * b + [1] * g + [0] * (n - b - g))

    @property
    def n(self) -> int:
        return int(self.spins.size)

    def counts(self) -> Counts:
        return Counts(int(np.sum(self.spins == 2)), int(np.sum(self.spins == 1)))


def full_rates(config: FullConfiguration, params: ModelParams) -> np.ndarray:
    """Flip rates H(eta, i, l) as an (n, 3) array."""
    spins = config.spins
    infect = params.lam / params.n * np.sum(spins == 2)
    h = np.zeros((spins.size, 3))
    h[spins != 0, 0] = 1.0
    h[spins == 1, 2] = infect
    h[spins == 0, 1] = infect
    return h


def simulate_full(
    params: ModelParams,
    init: FullConfiguration,
    horizon: float,
    rng: RngStream,
    stop_at_tau: bool = True,
) -> Trajectory:
    if params.n > FULL_CAPACITY:
        raise CapacityError(f"per-vertex simulation limited to n <= {FULL_CAPACITY}")
    if init.n != params.n:
        raise DomainError(f"configuration has {init.n} vertices, params say {params.n}")
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    spins = init.spins.copy()
    times, bs, gs, tau = simulate_full_kernel(
        spins, params.n, float(params.lam), float(horizon), rng.state, stop_at_tau
    )
    return Trajectory(
        times=times,
        b=bs.astype(np.int64),
        g=gs.astype(np.int64),
        tau=None if tau < 0 else float(tau),
        censored=tau < 0,
        seed_used=rng.master_seed,
        replica_index=rng.replica_index,
    )
