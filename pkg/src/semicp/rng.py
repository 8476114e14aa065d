"""Seeded random streams shared by every simulator.

Each replica owns a xoshiro256** generator whose 256-bit state is
filled from a splitmix64 sequence.  The splitmix64 starting point is a
64-bit avalanche mix of ``(master_seed, replica_index)``::

    z0    = master_seed  (as uint64)
    z1    = mix64(z0 ^ mix64(replica_index + GOLDEN))
    state = [splitmix64 outputs 1..4 started from z1]

with ``GOLDEN = 0x9E3779B97F4A7C15`` and ``mix64`` the splitmix64
finaliser (shifts 30/27/31, multipliers ``0xBF58476D1CE4E5B9`` and
``0x94D049BB133111EB``).  Uniforms are ``((x >> 11) + 1) * 2**-53`` so
they live in (0, 1] and ``-log(u)`` is always finite.

The generator functions are numba-compiled so the same draw sequence is
produced whether a stream is advanced from Python or inside a kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba as nb
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
MIX_A = np.uint64(0xBF58476D1CE4E5B9)
MIX_B = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


@nb.njit(cache=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * MIX_A
    z = (z ^ (z >> np.uint64(27))) * MIX_B
    return z ^ (z >> np.uint64(31))


@nb.njit(cache=True)
def seed_state(master_seed, replica_index, out):
    """Fill the 4-word xoshiro state ``out`` for one replica."""
    z = mix64(np.uint64(master_seed) ^ mix64(np.uint64(replica_index) + GOLDEN))
    for k in range(4):
        z = z + GOLDEN
        out[k] = mix64(z)
    # all-zero state is a fixed point of xoshiro
    if out[0] == 0 and out[1] == 0 and out[2] == 0 and out[3] == 0:
        out[0] = GOLDEN


@nb.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@nb.njit(cache=True)
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@nb.njit(cache=True)
def next_uniform(s):
    """Uniform draw on (0, 1]."""
    return (np.float64(next_u64(s) >> np.uint64(11)) + 1.0) * (1.0 / 9007199254740992.0)


@nb.njit(cache=True)
def next_exponential(s, rate):
    return -np.log(next_uniform(s)) / rate


@nb.njit(cache=True)
def next_below(s, m):
    """Uniform integer in [0, m) (m small; modulo bias is below 2**-40)."""
    return np.int64(next_u64(s) % np.uint64(m))


def to_u64(value: int) -> int:
    return int(value) & _MASK


def mix64_int(z: int) -> int:
    """Pure-integer twin of ``mix64``."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * int(MIX_A)) & _MASK
    z = ((z ^ (z >> 27)) * int(MIX_B)) & _MASK
    return z ^ (z >> 31)


def derive_seed(master_seed: int, *keys) -> int:
    """Fold extra integer keys into a master seed.

    Used to give each (n, lambda) cell of an experiment its own family
    of replica streams, independent of what else is in the run.
    """
    z = to_u64(master_seed)
    for key in keys:
        z = mix64_int(z ^ mix64_int(to_u64(key) + int(GOLDEN)))
    return z


def float_key(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


@dataclass
class RngStream:
    """One replica's generator, reproducible from its origin."""

    master_seed: int
    replica_index: int = 0
    state: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.master_seed = to_u64(self.master_seed)
        self.state = np.zeros(4, dtype=np.uint64)
        seed_state(np.uint64(self.master_seed), np.uint64(to_u64(self.replica_index)), self.state)

    @property
    def origin(self) -> tuple[int, int]:
        return self.master_seed, self.replica_index

    def uniform(self) -> float:
        return float(next_uniform(self.state))

    def uniforms(self, size: int) -> np.ndarray:
        return np.array([next_uniform(self.state) for _ in range(size)])

    def copy(self) -> "RngStream":
        other = RngStream(self.master_seed, self.replica_index)
        other.state = self.state.copy()
        return other


def rng_stream(master_seed: int, replica_index: int) -> RngStream:
    return RngStream(master_seed, replica_index)
