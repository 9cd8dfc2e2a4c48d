"""Counter-based random streams for reproducible parallel Monte Carlo.

Every variate is a pure function of ``(key, counter)`` built from the
splitmix64 finalizer, so a sample's draws do not depend on thread
scheduling, batching, or on how many other samples ran before it.  Three
equivalent implementations exist:

* scalar python-int arithmetic (`Stream`), used by the path samplers;
* vectorized uint64 numpy arrays (`uniform_array`, `normal_array`);
* njit-compiled scalar helpers in :mod:`discflow.kernels`.

All three return bit-identical doubles for the same (key, counter).

Draw-slot protocol: a uniform, exponential, or bernoulli consumes one
counter slot; a normal consumes two (Box-Muller pair).
"""

from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX_A = 0xBF58476D1CE4E5B9
_MIX_B = 0x94D049BB133111EB
_INV53 = 1.0 / (1 << 53)
TWO_PI = 6.283185307179586


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX_A) & MASK64
    z = ((z ^ (z >> 27)) * _MIX_B) & MASK64
    return z ^ (z >> 31)


def stream_key(seed: int, index: int) -> int:
    """Key of the index-th child stream of a seed."""
    return mix64((mix64(seed & MASK64) + (index * GOLDEN)) & MASK64)


def raw_u64(key: int, counter: int) -> int:
    return mix64((key + mix64((counter * GOLDEN) & MASK64)) & MASK64)


def uniform_at(key: int, counter: int) -> float:
    """Uniform double in (0, 1]."""
    return ((raw_u64(key, counter) >> 11) + 1) * _INV53


def normal_at(key: int, counter: int) -> float:
    """Standard normal from slots (counter, counter+1)."""
    u1 = uniform_at(key, counter)
    u2 = uniform_at(key, counter + 1)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(TWO_PI * u2)


class Stream:
    """Sequential view of one counter-based stream."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int):
        self.key = key & MASK64
        self.counter = 0

    def uniform(self) -> float:
        u = uniform_at(self.key, self.counter)
        self.counter += 1
        return u

    def normal(self) -> float:
        z = normal_at(self.key, self.counter)
        self.counter += 2
        return z

    def exponential(self, rate: float) -> float:
        if rate <= 0.0:
            raise ValueError("exponential rate must be positive")
        return -math.log(self.uniform()) / rate

    def bernoulli(self, p: float) -> bool:
        return self.uniform() <= p


# vectorized uint64 versions (arrays wrap silently, scalars would warn)

_U = np.uint64
_GOLD_U = _U(GOLDEN)
_A_U = _U(_MIX_A)
_B_U = _U(_MIX_B)
_S30 = _U(30)
_S27 = _U(27)
_S31 = _U(31)
_S11 = _U(11)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _S30)) * _A_U
    z = (z ^ (z >> _S27)) * _B_U
    return z ^ (z >> _S31)


def stream_keys(seed: int, n: int, start: int = 0) -> np.ndarray:
    idx = np.arange(start, start + n, dtype=np.uint64)
    base = mix64_array(np.full(n, seed & MASK64, dtype=np.uint64))
    return mix64_array(base + idx * _GOLD_U)


def uniform_array(keys: np.ndarray, counter: int | np.ndarray) -> np.ndarray:
    ctr = np.asarray(counter, dtype=np.uint64)
    r = mix64_array(keys + mix64_array(np.broadcast_to(ctr * _GOLD_U, keys.shape).copy()))
    return ((r >> _S11).astype(np.float64) + 1.0) * _INV53


def normal_array(keys: np.ndarray, counter: int | np.ndarray) -> np.ndarray:
    ctr = np.asarray(counter, dtype=np.uint64)
    u1 = uniform_array(keys, ctr)
    u2 = uniform_array(keys, ctr + _U(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(TWO_PI * u2)
