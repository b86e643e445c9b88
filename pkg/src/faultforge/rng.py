"""Counter-based random numbers.

Every value is a pure function of ``(seed, stream, counter)``, so kernels can
draw numbers for any pixel or primitive in any order and still get identical
output.  The mixer is the SplitMix64 finalizer.
"""

from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def mix64(value: int) -> int:
    """Scalar SplitMix64 finalizer on a Python int."""
    x = value & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def split_seed(master_seed: int, index: int) -> int:
    """Derive the ``index``-th child seed of ``master_seed``."""
    return mix64((master_seed + (index + 1) * 0x9E3779B97F4A7C15) & _MASK64)


def _key(seed: int, stream: int) -> np.uint64:
    return np.uint64(mix64(seed ^ mix64(stream * 0xD1B54A32D192ED03)))


def bits(seed: int, stream: int, counters) -> np.ndarray:
    """Raw 64-bit hashes for an array of non-negative counters."""
    c = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(_key(seed, stream) + (c + np.uint64(1)) * _GAMMA)


def uniform(seed: int, stream: int, counters) -> np.ndarray:
    """Uniform floats in [0, 1) with 53 bits of resolution."""
    return (bits(seed, stream, counters) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def uniform_n(seed: int, stream: int, n: int) -> np.ndarray:
    return uniform(seed, stream, np.arange(n, dtype=np.uint64))


def normal(seed: int, stream: int, counters) -> np.ndarray:
    """Standard normal draws (Box-Muller on two independent counter streams)."""
    c = np.asarray(counters, dtype=np.uint64)
    u1 = 1.0 - uniform(seed, stream, c)  # (0, 1]
    u2 = uniform(seed, stream + 0x5151, c)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def normal_n(seed: int, stream: int, shape) -> np.ndarray:
    """``prod(shape)`` normals; counter ``k`` yields both the cosine and sine
    Box-Muller outputs, so value ``2k`` and ``2k + 1`` share one pair of uniforms."""
    n = int(np.prod(shape))
    pairs = np.arange((n + 1) // 2, dtype=np.uint64)
    radius = np.sqrt(-2.0 * np.log(1.0 - uniform(seed, stream, pairs)))
    angle = 2.0 * np.pi * uniform(seed, stream + 0x5151, pairs)
    out = np.empty(2 * pairs.size)
    out[0::2] = radius * np.cos(angle)
    out[1::2] = radius * np.sin(angle)
    return out[:n].reshape(shape)
