"""Splittable seeded randomness.

Every consumer of randomness (a meter's noise, a meter's share blinds, master
selection, report drops, ...) gets its own ``numpy.random.Generator`` derived
from ``(seed, purpose, *entity)``. Streams never overlap, and the draws a
consumer sees do not depend on how many other consumers exist or in which
order they were created.
"""

from __future__ import annotations

import zlib

import numpy as np

# purpose tags used across the package
NOISE = "noise"
SPLIT = "split"
MASTERS = "masters"
DROP = "drop"
MALICIOUS = "malicious"
PROBE = "probe"
RUN = "run"
SYNTH = "synth"


def _tag(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


class RandomSource:
    """Root of a tree of independent substreams keyed by purpose and entity ids."""

    def __init__(self, seed: int):
        if seed < 0:
            raise ValueError("seed must be non-negative")
        self.seed = int(seed)

    def _sequence(self, purpose: str, *key: int) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.seed, spawn_key=(_tag(purpose), *map(int, key)))

    def stream(self, purpose: str, *key: int) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self._sequence(purpose, *key)))

    def child_seed(self, purpose: str, *key: int) -> int:
        """A 63-bit integer seed for a derived RandomSource (e.g. one run of an experiment)."""
        state = self._sequence(purpose, *key).generate_state(1, dtype=np.uint64)[0]
        return int(state >> np.uint64(1))

    def __repr__(self) -> str:
        return f"RandomSource(seed={self.seed})"
