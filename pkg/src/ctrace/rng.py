"""Random streams.

Trial streams come from :class:`numpy.random.SeedSequence` keyed by
``(master_seed, trial_index)`` so results never depend on execution order.
Per-vertex uniforms for the genealogical simulator are derived by hashing
the vertex's path, which lets runs with different parameters share the same
underlying randomness.
"""
from __future__ import annotations

import os

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
SALT_OFFSPRING = 0x1
SALT_DETECT = 0x2
SALT_TRACE = 0x3

DEFAULT_SEED = 20240601


def master_seed(seed: int | None = None) -> int:
    """Resolve the master seed: explicit value, then ``CTRACE_SEED``, then the default."""
    if seed is not None:
        return int(seed)
    env = os.environ.get("CTRACE_SEED", "").strip()
    return int(env) if env else DEFAULT_SEED


def trial_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & _MASK, index])))


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z = (z + _GOLDEN) & _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def child_key(parent: int, index: int) -> int:
    return mix64(parent ^ ((index * _GOLDEN) & _MASK))


def key_uniform(key: int, salt: int) -> float:
    """Uniform in ``[0, 1)`` attached to ``key``."""
    return (mix64(key ^ (salt * 0xD1B54A32D192ED03 & _MASK)) >> 11) * (1.0 / (1 << 53))
