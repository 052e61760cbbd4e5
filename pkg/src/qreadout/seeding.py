"""Reproducible per-trajectory random streams.

A single 64-bit root seed is split per trajectory as
``mix64(root XOR index)`` with the splitmix64 finalizer as the mixer, so an
ensemble produces identical results under any parallel work schedule.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer; a fixed 64-bit avalanche mixer."""
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def trajectory_seed(root_seed: int, index: int) -> int:
    return mix64((int(root_seed) ^ int(index)) & _MASK64)


def trajectory_rng(root_seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(trajectory_seed(root_seed, index))


def noise_block(root_seed: int, indices, n_steps: int) -> np.ndarray:
    """Standard-normal draws, one row per trajectory index, schedule-independent."""
    out = np.empty((len(indices), n_steps))
    for row, idx in enumerate(indices):
        out[row] = trajectory_rng(root_seed, idx).standard_normal(n_steps)
    return out
