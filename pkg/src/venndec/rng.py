"""Seeded random streams.

Every randomized routine in this package draws from a Philox counter-based
generator.  Independent substreams are derived from a root seed plus a path
of labels via ``numpy.random.SeedSequence(root, spawn_key=path)``, so
``generator(seed, "trial", 7)`` always yields the same stream regardless of
call order elsewhere.  String labels are mapped to integers with crc32.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["generator", "spawn_seed"]


def _as_key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError(f"seed path entries must be nonnegative, got {part}")
        return int(part)
    raise TypeError(f"seed path entries must be int or str, got {type(part).__name__}")


def generator(seed: int, *path) -> np.random.Generator:
    """Philox generator for the substream named by ``path`` under ``seed``."""
    key = tuple(_as_key(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def spawn_seed(seed: int, *path) -> int:
    """Deterministic 63-bit child seed, for embedding in reports."""
    key = tuple(_as_key(p) for p in path)
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=key)
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)
