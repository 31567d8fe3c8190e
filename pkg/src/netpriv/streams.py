"""Seeded random streams.

Every consumer of randomness gets its own ``random.Random`` seeded from a
``numpy.random.SeedSequence`` keyed by ``(purpose, index)``.  Streams are
therefore independent of execution order, which is what lets trial blocks
run in any order (or in parallel) and still aggregate to identical results.
"""

from __future__ import annotations

import random

from numpy.random import SeedSequence

POPULATION = 0
SESSIONS = 1
ALICE = 2


def stream(seed: int, *key: int) -> random.Random:
    state = SeedSequence(seed, spawn_key=key).generate_state(4, dtype="uint64")
    packed = 0
    for word in state:
        packed = (packed << 64) | int(word)
    return random.Random(packed)
