"""Seeding discipline.

All randomness flows through numpy's Philox generator, a counter-based
64-bit generator: identical (seed, draw order) gives identical streams on
every platform. Replica i of any Monte Carlo run uses ``seed ^ i`` so that
parallel execution order cannot change results.
"""
from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def make_rng(seed: int) -> np.random.Generator:
    """Generator for a master seed."""
    return np.random.Generator(np.random.Philox(key=int(seed) & _MASK64))


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    """Generator for replica ``replica`` of a run with master seed ``seed``."""
    return make_rng((int(seed) ^ replica) & _MASK64)


def derived_rng(seed: int, tag: int) -> np.random.Generator:
    """Independent stream for a named sub-purpose of a run.

    Tags are fixed odd constants chosen per call site; they keep auxiliary
    draws (e.g. rejection coins) out of the main sampling stream.
    """
    return make_rng((int(seed) * 0x9E3779B97F4A7C15 + tag) & _MASK64)
