"""Deterministic derivation of named random substreams.

All randomness in a run flows from a single 64-bit root seed.  Every
component that needs its own generator derives it from the root seed plus a
descriptive path, e.g. ``substream(seed, "engine", "sample", round_index)``.
The derivation is stable across processes and platforms: each path element
is serialized with ``str`` and hashed with crc32, and the resulting words
form the ``spawn_key`` of a :class:`numpy.random.SeedSequence`.

Because substreams are independent by construction, concurrent evaluation
cannot reorder draws between components: each consumer owns its stream and
advances it sequentially.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream_key(*path: object) -> tuple[int, ...]:
    """Hash a path of labels into a stable spawn key."""
    return tuple(zlib.crc32(str(p).encode("utf-8")) & 0xFFFFFFFF for p in path)


def substream(seed: int, *path: object) -> np.random.Generator:
    """Return the generator for ``path`` under the given root seed."""
    seq = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=substream_key(*path))
    return np.random.default_rng(seq)


def derive_seed(seed: int, *path: object) -> int:
    """Collapse a substream into a fresh 63-bit integer seed."""
    return int(substream(seed, *path).integers(0, 2**63))
