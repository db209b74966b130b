"""Deterministic randomness plumbing.

All stochastic choices in the pipeline flow from explicit 64-bit seeds
through counter-based (Philox) generators, so any sample can be replayed
bit-exactly from its manifest record regardless of generation order or
parallel scheduling.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
MAX_SEED = 2**64 - 1


def generator_from_seed(seed: int) -> np.random.Generator:
    """Philox generator keyed directly by a 64-bit seed."""
    return np.random.Generator(np.random.Philox(key=[_U64(seed & MAX_SEED), _U64(0)]))


def split_seed(master_seed: int, index: int) -> int:
    """Derive the ``index``-th child seed from a master seed.

    Counter-mode split: the Philox stream keyed by the master seed is
    positioned at a per-index counter block and one word is drawn, so
    children are independent of each other and of how many are requested.
    """
    bg = np.random.Philox(key=[_U64(master_seed & MAX_SEED), _U64(0)],
                          counter=[_U64(index & MAX_SEED), _U64(0), _U64(0), _U64(0)])
    return int(np.random.Generator(bg).integers(0, MAX_SEED, dtype=np.uint64, endpoint=True))


def as_generator(rng) -> np.random.Generator:
    """Accept either a Generator or a plain int seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    return generator_from_seed(int(rng))
