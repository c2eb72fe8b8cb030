"""Seeded, splittable random number generation.

All stochastic operations in the package take an explicit integer seed and
build a counter-based Philox generator from it, so results are reproducible
regardless of how work is partitioned across workers.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["make_rng", "derive_seed", "spawn_seeds"]


def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for a given seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def derive_seed(master: int, label: str, index: int = 0) -> int:
    """Deterministic sub-seed from (master seed, component label, index).

    Labels keep sub-streams independent across components without relying on
    call order; crc32 keeps the mapping stable across processes and runs.
    """
    tag = zlib.crc32(label.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=[int(master), tag, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def spawn_seeds(master: int, label: str, n: int) -> list[int]:
    """n independent sub-seeds for repeated runs of one component."""
    return [derive_seed(master, label, i) for i in range(n)]
