"""Deterministic RNG derivation.

Every random draw in the package comes from a Generator derived from
(seed, stream name [, index]), so sibling components never share or
reorder each other's streams.  String names hash through crc32, which is
stable across platforms and processes.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def derive_rng(seed: int, *stream) -> np.random.Generator:
    """Generator for the sub-stream identified by (seed, *stream)."""
    seq = np.random.SeedSequence([_key(seed), *(_key(p) for p in stream)])
    return np.random.Generator(np.random.PCG64(seq))


def derive_seed(seed: int, *stream) -> int:
    """Stable derived integer seed (for APIs that take a seed, not a rng)."""
    seq = np.random.SeedSequence([_key(seed), *(_key(p) for p in stream)])
    return int(seq.generate_state(1, dtype=np.uint64)[0] & 0x7FFFFFFF)
