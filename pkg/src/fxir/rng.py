"""SplitMix64 stream used for reproducible parameter and input generation.

Constants are the reference ones (Steele, Lea & Flood 2014):
golden gamma 0x9E3779B97F4A7C15, mix multipliers 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB. Uniform reals take the top 53 bits.
"""
from __future__ import annotations

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int = 0):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        return int(self.u64(1)[0])

    def u64(self, n: int) -> np.ndarray:
        steps = (np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GAMMA))  # wraps mod 2**64
        z = np.uint64(self.state) + steps
        self.state = (self.state + n * GAMMA) & MASK64
        return _mix(z)

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        shape = tuple(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).astype(np.float32).reshape(shape)
