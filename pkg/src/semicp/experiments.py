"""Replicated experiments: extinction sweeps, mean-field gaps, audits.

Every (n, lambda) cell draws its replica streams from
``derive_seed(master_seed, n, lambda_bits)`` so a cell's numbers do not
depend on what else is in the run or on how replicas are chunked over
workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import auxchains as aux
from .chain import CapacityError, DomainError, FullConfiguration, counts_at_batch, full_counts_at_batch
from .chain import max_mass_batch, sup_deviation_batch, tau_batch
from .coupling import CouplingVariant, audit_batch, domination_batch
from .meanfield import integrate
from .rng import derive_seed, float_key

KINDS = ("sweep", "meanfield", "coupling-audit", "lumping", "aux", "ode")
LUMPING_MAX_N = 8

DEFAULT_REPLICAS = {
    "sweep": 1000,
    "meanfield": 100,
    "coupling-audit": 10_000,
    "lumping": 100_000,
    "aux": 10_000,
    "ode": 1,
}
DEFAULT_HORIZON = {
    "sweep": 1000.0,
    "meanfield": 5.0,
    "coupling-audit": 5.0,
    "lumping": 2.0,
    "aux": 1.0,
    "ode": 20.0,
}


@dataclass
class ExperimentConfig:
    kind: str
    n_list: list[int] = field(default_factory=lambda: [100])
    lambda_list: list[float] = field(default_factory=lambda: [2.0])
    theta: Optional[float] = None
    replicas: int = 1000
    horizon: float = 1000.0
    master_seed: int = 0
    out_path: Optional[str] = None
    format: str = "csv"
    epsilon: float = 0.05
    workers: int = 1
    horizon_log_scale: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown experiment kind {self.kind!r}")
        if self.replicas < 1:
            raise DomainError("replicas must be >= 1")
        if any(n < 1 for n in self.n_list):
            raise DomainError("every n must be >= 1")
        if any(not lam > 0 for lam in self.lambda_list):
            raise DomainError("every lambda must be > 0")
        if not self.horizon > 0:
            raise DomainError("horizon must be > 0")
        if self.format not in ("csv", "json"):
            raise DomainError("format must be csv or json")

    def horizon_for(self, n: int) -> float:
        """Horizon for a cell; with ``horizon_log_scale`` it is horizon * ln n."""
        if self.horizon_log_scale:
            return self.horizon * math.log(max(n, 2))
        return self.horizon

    def cell_seed(self, *keys) -> int:
        return derive_seed(self.master_seed, *keys)


@dataclass
class SweepRow:
    n: int
    lam: float
    replicas: int
    extinct_count: int
    survived_count: int
    tau_median: Optional[float]
    tau_mean: Optional[float]
    tau_p95: Optional[float]
    horizon: float


@dataclass
class MeanFieldRow:
    n: int
    lam: float
    T: float
    replicas: int
    epsilon: float
    exceed_count: int
    sup_dev_median: float


@dataclass
class AuditRow:
    variant: str
    n: int
    lam: float
    replicas: int
    violation_replicas: int
    first_violation_example: Optional[dict]


@dataclass
class LumpingRow:
    n: int
    lam: float
    T: float
    replicas: int
    b0: int
    g0: int
    tv_distance: float


@dataclass
class AuxRow:
    check: str
    lam: Optional[float]
    n: Optional[int]
    theta: Optional[float]
    replicas: int
    observed: Optional[float]
    threshold: Optional[float]
    passed: bool
    detail: str


@dataclass
class OdeRow:
    lam: float
    t: float
    b: float
    g: float


ROW_TYPES = {
    "sweep": SweepRow,
    "meanfield": MeanFieldRow,
    "coupling-audit": AuditRow,
    "lumping": LumpingRow,
    "aux": AuxRow,
    "ode": OdeRow,
}


def run_batched(kernel, args: tuple, seed: int, replicas: int, workers: int = 1):
    """Run ``kernel(*args, seed, first, count)`` over replica chunks.

    Chunks cover fixed replica indices, so results are identical for any
    number of workers.  Array results (or tuples of arrays) are joined
    along the first axis.
    """
    seed = np.uint64(seed)
    if workers <= 1 or replicas < 2:
        return kernel(*args, seed, 0, replicas)
    bounds = np.linspace(0, replicas, min(workers, replicas) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(
            pool.map(lambda lo_hi: kernel(*args, seed, int(lo_hi[0]), int(lo_hi[1] - lo_hi[0])), zip(bounds[:-1], bounds[1:]))
        )
    if isinstance(parts[0], tuple):
        return tuple(np.concatenate([p[k] for p in parts]) for k in range(len(parts[0])))
    return np.concatenate(parts)


def _cells(config: ExperimentConfig):
    return sorted({(lam, n) for lam in config.lambda_list for n in config.n_list})


def run_sweep(config: ExperimentConfig) -> list[SweepRow]:
    """Extinction times from the all-wholly-infected start (n, 0)."""
    rows = []
    for lam, n in _cells(config):
        horizon = config.horizon_for(n)
        taus = run_batched(
            tau_batch, (n, float(lam), n, 0, float(horizon)),
            config.cell_seed(n, float_key(lam)), config.replicas, config.workers,
        )
        done = taus[~np.isnan(taus)]
        stats = (None, None, None)
        if done.size:
            stats = (float(np.median(done)), float(np.mean(done)), float(np.percentile(done, 95)))
        rows.append(SweepRow(n, float(lam), config.replicas, int(done.size), int(taus.size - done.size), *stats, float(horizon)))
    return rows


def run_meanfield(config: ExperimentConfig) -> list[MeanFieldRow]:
    """Sup-norm gap between (B/n, G/n) from (n, 0) and the ODE from (1, 0)."""
    rows = []
    T = config.horizon
    for lam, n in _cells(config):
        path = integrate((1.0, 0.0), lam, T)
        sup = run_batched(
            sup_deviation_batch,
            (n, float(lam), n, 0, float(T), path.b.copy(), path.g.copy(), path.step),
            config.cell_seed(n, float_key(lam), float_key(T)), config.replicas, config.workers,
        )
        rows.append(MeanFieldRow(n, float(lam), float(T), config.replicas, config.epsilon,
                                 int(np.sum(sup > config.epsilon)), float(np.median(sup))))
    return rows


def meanfield_deviations(n: int, lam: float, T: float, replicas: int, seed: int) -> np.ndarray:
    path = integrate((1.0, 0.0), lam, T)
    return sup_deviation_batch(n, float(lam), n, 0, float(T), path.b.copy(), path.g.copy(), path.step,
                               np.uint64(seed), 0, replicas)


def _audit(config: ExperimentConfig, n: int, lam: float, variant: CouplingVariant, identical: bool):
    def kernel(*args):
        return audit_batch(*args, identical)

    return run_batched(
        kernel,
        (n, float(lam), float(config.horizon), variant == CouplingVariant.REPAIRED),
        config.cell_seed(n, float_key(lam), int(variant), int(identical)),
        config.replicas,
        config.workers,
    )


def run_coupling_audit(config: ExperimentConfig, identical_starts: bool = False) -> list[AuditRow]:
    """Both coupling tables from random ordered starting pairs.

    A replica counts as violating if the order fails after any event
    before the horizon; the first such replica is kept as an example.
    """
    rows = []
    for variant in (CouplingVariant.VERBATIM, CouplingVariant.REPAIRED):
        for lam, n in _cells(config):
            hit, first_t, first_s, starts = _audit(config, n, lam, variant, identical_starts)
            example = None
            idx = np.flatnonzero(hit)
            if idx.size:
                k = int(idx[0])
                example = {
                    "replica": k,
                    "start": [[int(starts[k, 0]), int(starts[k, 1])], [int(starts[k, 2]), int(starts[k, 3])]],
                    "time": float(first_t[k]),
                    "s1": [int(first_s[k, 0]), int(first_s[k, 1])],
                    "s2": [int(first_s[k, 2]), int(first_s[k, 3])],
                }
            rows.append(AuditRow(variant.name.capitalize(), n, float(lam), config.replicas, int(hit.sum()), example))
    return rows


def _counts_law(samples: np.ndarray, n: int) -> np.ndarray:
    idx = samples[:, 0] * (n + 1) + samples[:, 1]
    return np.bincount(idx, minlength=(n + 1) ** 2) / samples.shape[0]


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.sum(np.abs(p - q)))


def lumping_laws(n: int, lam: float, T: float, replicas: int, seed: int, init=None, workers: int = 1):
    """Empirical laws of Counts at T from the lumped and per-vertex simulators."""
    if n > LUMPING_MAX_N:
        raise CapacityError(f"lumping check limited to n <= {LUMPING_MAX_N}")
    b0, g0 = init if init is not None else (n, 0)
    spins = FullConfiguration.from_counts((b0, g0), n).spins
    lumped = run_batched(counts_at_batch, (n, float(lam), b0, g0, float(T)), derive_seed(seed, 1), replicas, workers)
    full = run_batched(full_counts_at_batch, (spins, float(lam), float(T)), derive_seed(seed, 2), replicas, workers)
    return _counts_law(lumped, n), _counts_law(full, n)


def run_lumping_check(config: ExperimentConfig, init=None) -> list[LumpingRow]:
    rows = []
    for lam, n in _cells(config):
        if n > LUMPING_MAX_N:
            raise CapacityError(f"lumping check limited to n <= {LUMPING_MAX_N}, got {n}")
    for lam, n in _cells(config):
        b0, g0 = init if init is not None else (n, 0)
        p, q = lumping_laws(n, lam, config.horizon, config.replicas,
                            config.cell_seed(n, float_key(lam)), (b0, g0), config.workers)
        rows.append(LumpingRow(n, float(lam), float(config.horizon), config.replicas, b0, g0, tv_distance(p, q)))
    return rows


# --------------------------------------------------------------------------
# auxiliary chains

TILDE_PROBES = (1.0, 3.0, 5.0)
TILDE_MEAN_RTOL = 0.05


def hat_samples(design, n: int, t: float, replicas: int, seed: int, workers: int = 1) -> np.ndarray:
    bh, sh = design.initial_counts(n)
    rates = np.array(aux.hat_rates(design, n))
    return run_batched(aux.hat_at_batch, (bh, sh, rates, float(t)), seed, replicas, workers)


def domination_audit(design, n: int, horizon: float, replicas: int, seed: int, workers: int = 1):
    """Violations before the box exit, per replica, and the exit times."""
    b, s = design.initial_counts(n)
    hat = np.array(aux.hat_rates(design, n))
    box = np.array(design.box, dtype=float)
    return run_batched(domination_batch, (b, s, n, float(design.lam), hat, box, float(horizon)), seed, replicas, workers)


def tilde_samples(n0: int, theta: float, probes, horizon: float, replicas: int, seed: int, workers: int = 1):
    probes = np.sort(np.asarray(probes, dtype=float))
    return run_batched(aux.tilde_batch, (n0, float(theta), probes, float(horizon)), seed, replicas, workers)


def run_aux_checks(config: ExperimentConfig) -> list[AuxRow]:
    """Minorant growth, domination, and tilde-chain extinction checks.

    Each supercritical lambda gets a design (default beta, alpha from
    the halving grid); a failed design becomes a ``design`` row with
    ``passed=False`` and its checks are skipped.
    """
    rows = []
    R = config.replicas
    for lam in sorted(set(config.lambda_list)):
        try:
            design = aux.design_survival(lam)
        except (aux.InfeasibleDesign, DomainError) as exc:
            rows.append(AuxRow("design", float(lam), None, config.theta, 0, None, None, False, str(exc)))
            continue
        rows.append(AuxRow("design", float(lam), None, config.theta, 0, design.alpha, None, True,
                           f"beta={design.beta!r} alpha={design.alpha!r} D={design.D!r} T4={design.T4!r}"))
        for n in sorted(set(config.n_list)):
            t = config.horizon
            seed = config.cell_seed(n, float_key(lam))
            samples = hat_samples(design, n, t, R, derive_seed(seed, 1), config.workers)
            bh0, sh0 = design.initial_counts(n)
            grew = float(np.mean((samples[:, 0] >= bh0) & (samples[:, 1] >= sh0)))
            exact = aux.hat_growth_probability(design, n, t)
            se = math.sqrt(max(exact * (1 - exact), 1e-12) / R)
            rows.append(AuxRow("hat-growth", float(lam), n, None, R, grew, exact,
                               bool(abs(grew - exact) <= 3 * se), f"t={t!r} se={se!r}"))
            drift = samples[:, 1] - sh0
            expect = n * (design.q1 - design.q2) * t
            se = float(np.std(drift, ddof=1) / math.sqrt(R)) if R > 1 else math.inf
            rows.append(AuxRow("hat-drift", float(lam), n, None, R, float(np.mean(drift)), expect,
                               bool(abs(np.mean(drift) - expect) <= 3 * se), f"se={se!r}"))
            gammas, viols = domination_audit(design, n, design.T4, R, derive_seed(seed, 2), config.workers)
            bad = int(np.sum(viols > 0))
            rows.append(AuxRow("domination", float(lam), n, None, R, float(bad), 0.0, bad == 0,
                               f"horizon=T4={design.T4!r} exits={int(np.sum(~np.isnan(gammas)))}"))
    if config.theta is not None:
        theta = config.theta
        for n in sorted(set(config.n_list)):
            seed = config.cell_seed(n, float_key(theta), 7)
            t_ext = aux.tilde_horizon(n, theta)
            values, ext = tilde_samples(n, theta, TILDE_PROBES, t_ext, R, seed, config.workers)
            frac = float(np.mean(~np.isnan(ext)))
            bound = aux.tilde_extinction_bound(n, theta)
            rows.append(AuxRow("tilde-extinction", None, n, theta, R, frac, bound, frac >= bound,
                               f"t={t_ext!r}"))
            for j, t in enumerate(TILDE_PROBES):
                if t > t_ext:
                    continue
                mean = float(np.mean(values[:, j]))
                want = aux.tilde_mean(t, n, theta)
                rel = abs(mean - want) / want
                rows.append(AuxRow("tilde-mean", None, n, theta, R, mean, want, rel <= TILDE_MEAN_RTOL,
                                   f"t={t!r} rel_err={rel!r}"))
    return rows


def small_region_persistence(lam: float, theta: float, n: int, replicas: int, seed: int, workers: int = 1) -> dict:
    """How often (B+G)/n stays below theta/((3+theta)*lam) after burn-in.

    Burn-in ends when the ODE from (1, 0) first has b + g at half the
    threshold; the window then lasts (1 + theta/2) * ln n.
    """
    if not lam < 4:
        raise DomainError("persistence below the threshold is a subcritical property")
    threshold = aux.small_region_threshold(lam, theta)
    window = aux.tilde_horizon(n, theta)
    T = 1.0
    while True:
        path = integrate((1.0, 0.0), lam, T)
        mass = path.b + path.g
        below = np.flatnonzero(mass <= threshold / 2)
        if below.size:
            burn_in = float(path.times[below[0]])
            break
        T *= 2
    worst = run_batched(max_mass_batch, (n, float(lam), n, 0, burn_in, burn_in + window), seed, replicas, workers)
    return {
        "threshold": threshold,
        "burn_in": burn_in,
        "window": window,
        "fraction_below": float(np.mean(worst < threshold)),
        "max_mass": worst,
    }


def run_ode(config: ExperimentConfig, step: float = 1e-3, every: int = 100) -> list[OdeRow]:
    """ODE paths from (1, 0), one row per ``every`` integration steps."""
    rows = []
    for lam in sorted(set(config.lambda_list)):
        path = integrate((1.0, 0.0), lam, config.horizon, step)
        times = path.times
        keep = list(range(0, len(times), every))
        if keep[-1] != len(times) - 1:
            keep.append(len(times) - 1)
        rows.extend(OdeRow(float(lam), float(times[i]), float(path.b[i]), float(path.g[i])) for i in keep)
    return rows


RUNNERS = {
    "sweep": run_sweep,
    "meanfield": run_meanfield,
    "coupling-audit": run_coupling_audit,
    "lumping": run_lumping_check,
    "aux": run_aux_checks,
    "ode": run_ode,
}
