"""Order-preserving couplings of two copies of the lumped chain.

The order is (B1, G1) >= (B2, G2) iff B1 >= B2 and B1 + G1 >= B2 + G2.

Two joint rate tables are provided.  ``VERBATIM`` is the classical
eleven-row table (shared moves at the smaller rate, lone moves for the
excess).  Its lone B1-death row can break the second coordinate of the
order when B1 > B2 and B1 + G1 == B2 + G2: e.g. ((2, 0), (1, 1)) goes
to ((1, 0), (1, 1)).  ``REPAIRED`` moves up to min(B1 - B2, (G2 - G1)+)
of that mass onto a combined move (B1 dies, a semi-infected of chain 2
heals), taking the same amount from the lone G2-death row.  Both
marginals are unchanged and every row then preserves the order.

A second coupling pairs the chain, written as (B, S = B + G), with the
constant-rate minorant walk (B^, S^) while the chain stays in the box.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numba as nb
import numpy as np

from .auxchains import SurvivalDesign, hat_rates
from .chain import Counts, DomainError, ModelParams, transition_rates
from .rng import RngStream, next_below, next_exponential, next_uniform, seed_state


class CouplingVariant(enum.IntEnum):
    VERBATIM = 0
    REPAIRED = 1


class RegionExit(DomainError):
    """The chain left the box where the minorant coupling is defined."""


class PairState(NamedTuple):
    s1: Counts
    s2: Counts


class JointRateRow(NamedTuple):
    delta1: tuple[int, int]
    delta2: tuple[int, int]
    rate: float
    label: str = ""


def dominates(s1, s2) -> bool:
    return s1[0] >= s2[0] and s1[0] + s1[1] >= s2[0] + s2[1]


# row k moves chain 1 by (D1B[k], D1G[k]) and chain 2 by (D2B[k], D2G[k])
ROW_LABELS = (
    "joint B-death",
    "lone B1-death",
    "B1-death with G2-death",
    "joint G-death",
    "lone G1-death",
    "lone G2-death",
    "joint promote",
    "lone promote 1",
    "lone promote 2",
    "joint seed",
    "lone seed 1",
    "lone seed 2",
    "lone B2-death",
)
D1B = np.array([-1, -1, -1, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0], dtype=np.int64)
D1G = np.array([0, 0, 0, -1, -1, 0, -1, -1, 0, 1, 1, 0, 0], dtype=np.int64)
D2B = np.array([-1, 0, 0, 0, 0, 0, 1, 0, 1, 0, 0, 0, -1], dtype=np.int64)
D2G = np.array([0, 0, -1, -1, 0, -1, -1, 0, -1, 1, 0, 1, 0], dtype=np.int64)
N_ROWS = 13
_REPAIR_ROW = 2
_OFF_ORDER_ROW = 12


@nb.njit(cache=True)
def joint_rates(b1, g1, b2, g2, n, lam, repaired, out):
    """Fill ``out`` (length 13) with the joint rates.

    Row 12 (lone B2-death) is only nonzero when B2 > B1, a state the
    ordered dynamics never visit; it keeps both marginals exact off the
    order so that unordered pairs can still be simulated.
    """
    c = lam / n
    out[0] = min(b1, b2)
    lone_b1 = max(b1 - b2, 0)
    mg = min(g1, g2)
    lone_g2 = g2 - mg
    m = 0
    if repaired:
        m = min(lone_b1, lone_g2)
    out[1] = lone_b1 - m
    out[2] = m
    out[3] = mg
    out[4] = g1 - mg
    out[5] = lone_g2 - m
    p1 = b1 * g1
    p2 = b2 * g2
    mp = min(p1, p2)
    out[6] = c * mp
    out[7] = c * (p1 - mp)
    out[8] = c * (p2 - mp)
    e1 = b1 * (n - b1 - g1)
    e2 = b2 * (n - b2 - g2)
    me = min(e1, e2)
    out[9] = c * me
    out[10] = c * (e1 - me)
    out[11] = c * (e2 - me)
    out[12] = max(b2 - b1, 0)


def coupling_rates(pair, params: ModelParams, variant=CouplingVariant.REPAIRED) -> list[JointRateRow]:
    """The joint rate table as a list of rows.

    VERBATIM gives the eleven classical rows, REPAIRED adds the combined
    B1/G2 death row.  A lone B2-death row is appended only for pairs
    with B2 > B1.
    """
    s1 = Counts(*pair[0]).check(params)
    s2 = Counts(*pair[1]).check(params)
    variant = CouplingVariant(variant)
    rates = np.zeros(N_ROWS)
    joint_rates(s1.b, s1.g, s2.b, s2.g, params.n, float(params.lam), variant == CouplingVariant.REPAIRED, rates)
    rows = []
    for k in range(N_ROWS):
        if k == _REPAIR_ROW and variant == CouplingVariant.VERBATIM:
            continue
        if k == _OFF_ORDER_ROW and s2.b <= s1.b:
            continue
        rows.append(
            JointRateRow(
                (int(D1B[k]), int(D1G[k])), (int(D2B[k]), int(D2G[k])), float(rates[k]), ROW_LABELS[k]
            )
        )
    return rows


_ATOMS = ((-1, 0), (0, -1), (1, -1), (0, 1))


@dataclass
class MarginalReport:
    marginal1: tuple[float, float, float, float]
    marginal2: tuple[float, float, float, float]
    expected1: tuple[float, float, float, float]
    expected2: tuple[float, float, float, float]
    mismatches: list[str] = field(default_factory=list)
    tol: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.mismatches


def marginal_consistency(pair, params: ModelParams, variant=CouplingVariant.REPAIRED, tol: float = 1e-12) -> MarginalReport:
    """Project the joint table onto each chain and compare with its own rates.

    ``tol`` is relative to the larger of the two values; the projections
    are sums of the same floating terms, so they agree to rounding.
    """
    rows = coupling_rates(pair, params, variant)
    sums = [[0.0] * 4, [0.0] * 4]
    for row in rows:
        for which, delta in ((0, row.delta1), (1, row.delta2)):
            if delta != (0, 0):
                sums[which][_ATOMS.index(delta)] += row.rate
    expected = [tuple(transition_rates(pair[0], params)), tuple(transition_rates(pair[1], params))]
    report = MarginalReport(tuple(sums[0]), tuple(sums[1]), expected[0], expected[1], tol=tol)
    names = ("RecoverWhole", "RecoverSemi", "Promote", "Seed")
    for which in (0, 1):
        for k in range(4):
            got, want = sums[which][k], expected[which][k]
            if abs(got - want) > tol * max(1.0, abs(want)):
                report.mismatches.append(f"chain {which + 1} {names[k]}: joint {got!r} vs {want!r}")
    return report


@nb.njit(cache=True)
def _pick(u, rates, total):
    target = u * total
    acc = 0.0
    last = -1
    for k in range(rates.shape[0]):
        r = rates[k]
        if r > 0.0:
            acc += r
            last = k
            if target <= acc:
                return k
    return last


@nb.njit(cache=True)
def _ordered(b1, g1, b2, g2):
    return b1 >= b2 and b1 + g1 >= b2 + g2


@nb.njit(cache=True)
def coupled_kernel(b1, g1, b2, g2, n, lam, horizon, repaired, state):
    rates = np.zeros(N_ROWS)
    times = [0.0]
    path = [(b1, g1, b2, g2)]
    vt = [0.0]
    vpath = [(0, 0, 0, 0)]
    vt.pop()
    vpath.pop()
    t = 0.0
    while True:
        joint_rates(b1, g1, b2, g2, n, lam, repaired, rates)
        total = rates.sum()
        if total <= 0.0:
            break
        dt = next_exponential(state, total)
        if t + dt > horizon:
            break
        t += dt
        k = _pick(next_uniform(state), rates, total)
        b1 += D1B[k]
        g1 += D1G[k]
        b2 += D2B[k]
        g2 += D2G[k]
        times.append(t)
        path.append((b1, g1, b2, g2))
        if not _ordered(b1, g1, b2, g2):
            vt.append(t)
            vpath.append((b1, g1, b2, g2))
    return np.array(times), path, np.array(vt), vpath


@dataclass
class CoupledRun:
    times: np.ndarray
    states: list[PairState]
    violations: list[tuple[float, PairState]]


def _pair(t):
    return PairState(Counts(int(t[0]), int(t[1])), Counts(int(t[2]), int(t[3])))


def simulate_coupled(pair, params: ModelParams, horizon: float, variant, rng: RngStream) -> CoupledRun:
    """Run the joint chain; every post-event order failure is logged."""
    s1 = Counts(*pair[0]).check(params)
    s2 = Counts(*pair[1]).check(params)
    if not dominates(s1, s2):
        raise DomainError(f"initial pair {tuple(s1)}, {tuple(s2)} is not ordered")
    repaired = CouplingVariant(variant) == CouplingVariant.REPAIRED
    times, path, vt, vpath = coupled_kernel(
        s1.b, s1.g, s2.b, s2.g, params.n, float(params.lam), float(horizon), repaired, rng.state
    )
    return CoupledRun(
        times=times,
        states=[_pair(p) for p in path],
        violations=[(float(t), _pair(p)) for t, p in zip(vt, vpath)],
    )


@nb.njit(cache=True)
def _random_state(n, state):
    while True:
        b = next_below(state, n + 1)
        g = next_below(state, n + 1)
        if b + g <= n:
            return b, g


@nb.njit(cache=True)
def random_ordered_pair(n, state):
    """s2 uniform over valid states, then s1 uniform over states dominating s2."""
    b2, g2 = _random_state(n, state)
    while True:
        b1, g1 = _random_state(n, state)
        if _ordered(b1, g1, b2, g2):
            return b1, g1, b2, g2


@nb.njit(cache=True, nogil=True)
def audit_batch(n, lam, horizon, repaired, seed, first, replicas, identical):
    """Per replica: 1 if the order ever broke, plus the first failure.

    Each replica stops at its first failure.  ``identical`` starts both
    chains from the same random state.
    """
    hit = np.zeros(replicas, dtype=np.int64)
    first_t = np.full(replicas, np.nan)
    first_s = np.zeros((replicas, 4), dtype=np.int64)
    starts = np.zeros((replicas, 4), dtype=np.int64)
    rates = np.zeros(N_ROWS)
    state = np.empty(4, dtype=np.uint64)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        if identical:
            b2, g2 = _random_state(n, state)
            b1, g1 = b2, g2
        else:
            b1, g1, b2, g2 = random_ordered_pair(n, state)
        starts[r, 0] = b1
        starts[r, 1] = g1
        starts[r, 2] = b2
        starts[r, 3] = g2
        t = 0.0
        while True:
            joint_rates(b1, g1, b2, g2, n, lam, repaired, rates)
            total = rates.sum()
            if total <= 0.0:
                break
            dt = next_exponential(state, total)
            if t + dt > horizon:
                break
            t += dt
            k = _pick(next_uniform(state), rates, total)
            b1 += D1B[k]
            g1 += D1G[k]
            b2 += D2B[k]
            g2 += D2G[k]
            if not _ordered(b1, g1, b2, g2):
                hit[r] = 1
                first_t[r] = t
                first_s[r, 0] = b1
                first_s[r, 1] = g1
                first_s[r, 2] = b2
                first_s[r, 3] = g2
                break
    return hit, first_t, first_s, starts


# --------------------------------------------------------------------------
# chain versus minorant walk


class DominationState(NamedTuple):
    chain: tuple[int, int]  # (B, S = B + G)
    minorant: tuple[int, int]  # (B^, S^)


# deltas on (B, S, B^, S^)
DOM_LABELS = (
    "joint B-death",
    "minorant B-death",
    "joint G-death",
    "minorant S-death",
    "joint promote",
    "chain promote",
    "joint seed",
    "chain seed",
)
DOM_DELTA = np.array(
    [
        [-1, -1, -1, -1],
        [0, 0, -1, -1],
        [0, -1, 0, -1],
        [0, 0, 0, -1],
        [1, 0, 1, 0],
        [1, 0, 0, 0],
        [0, 1, 0, 1],
        [0, 1, 0, 0],
    ],
    dtype=np.int64,
)


@nb.njit(cache=True)
def _dom_rates(b, s, n, lam, hat, out):
    g = s - b
    f1 = float(b)
    f2 = float(g)
    f3 = lam / n * b * g
    f4 = lam / n * b * (n - s)
    out[0] = f1
    out[1] = max(hat[0] - f1, 0.0)
    out[2] = f2
    out[3] = max(hat[1] - f2, 0.0)
    out[4] = hat[2]
    out[5] = max(f3 - hat[2], 0.0)
    out[6] = hat[3]
    out[7] = max(f4 - hat[3], 0.0)


def domination_rates(chain, minorant, design: SurvivalDesign, n: int) -> list[JointRateRow]:
    """The eight joint rows, as (delta on (B, S), delta on (B^, S^), rate).

    Residual rows are nonnegative exactly inside the box; outside it the
    coupling is undefined and :class:`RegionExit` is raised.  Round-off
    on the box faces is clipped at zero.
    """
    b, s = chain
    if not design.in_region(b, s, n):
        raise RegionExit(f"chain (B, S)=({b}, {s}) outside the box for n={n}")
    hat = np.array(hat_rates(design, n))
    out = np.zeros(8)
    _dom_rates(b, s, n, float(design.lam), hat, out)
    return [
        JointRateRow((int(d[0]), int(d[1])), (int(d[2]), int(d[3])), float(r), label)
        for d, r, label in zip(DOM_DELTA, out, DOM_LABELS)
    ]


@nb.njit(cache=True)
def _in_box(b, s, n, box):
    tol = 1e-9
    return (
        b >= n * box[0] - tol and b <= n * box[1] + tol and s >= n * box[2] - tol and s <= n * box[3] + tol
    )


@nb.njit(cache=True)
def domination_kernel(b, s, bh, sh, n, lam, hat, box, horizon, state):
    """Returns (gamma or -1, violations, events, final (B, S, B^, S^))."""
    rates = np.zeros(8)
    t = 0.0
    viol = 0
    events = 0
    gamma = -1.0
    if not _in_box(b, s, n, box):
        return 0.0, 0, 0, (b, s, bh, sh)
    while True:
        _dom_rates(b, s, n, lam, hat, rates)
        total = rates.sum()
        dt = next_exponential(state, total)
        if t + dt > horizon:
            break
        t += dt
        k = _pick(next_uniform(state), rates, total)
        b += DOM_DELTA[k, 0]
        s += DOM_DELTA[k, 1]
        bh += DOM_DELTA[k, 2]
        sh += DOM_DELTA[k, 3]
        events += 1
        if b < bh or s < sh:
            viol += 1
        if not _in_box(b, s, n, box):
            gamma = t
            break
    return gamma, viol, events, (b, s, bh, sh)


@dataclass
class DominationRun:
    gamma: float | None
    violations: int
    events: int
    final: DominationState


def _design_arrays(design: SurvivalDesign, n: int):
    return np.array(hat_rates(design, n)), np.array(design.box, dtype=float)


def simulate_domination(design: SurvivalDesign, n: int, horizon: float, rng: RngStream, init=None) -> DominationRun:
    """Joint run of (B, S) and (B^, S^) until the horizon or box exit.

    Both start at the floored pivot (B, S) = (n*b0, n*(b0 + g0)) unless
    ``init`` gives a different DominationState.
    """
    if init is None:
        start = design.initial_counts(n)
        init = DominationState(start, start)
    (b, s), (bh, sh) = init
    hat, box = _design_arrays(design, n)
    gamma, viol, events, fin = domination_kernel(
        b, s, bh, sh, n, float(design.lam), hat, box, float(horizon), rng.state
    )
    return DominationRun(
        gamma=None if gamma < 0 else float(gamma),
        violations=int(viol),
        events=int(events),
        final=DominationState((int(fin[0]), int(fin[1])), (int(fin[2]), int(fin[3]))),
    )


@nb.njit(cache=True, nogil=True)
def domination_batch(b, s, n, lam, hat, box, horizon, seed, first, replicas):
    gammas = np.empty(replicas)
    viols = np.zeros(replicas, dtype=np.int64)
    state = np.empty(4, dtype=np.uint64)
    for r in range(replicas):
        seed_state(seed, first + r, state)
        gamma, viol, _, _ = domination_kernel(b, s, b, s, n, lam, hat, box, horizon, state)
        gammas[r] = np.nan if gamma < 0 else gamma
        viols[r] = viol
    return gammas, viols
