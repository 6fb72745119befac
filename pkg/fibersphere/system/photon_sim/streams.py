"""Counter-based random substreams.

Every stochastic step draws from a Philox generator keyed by the run seed and
a tuple of integers (purpose, point index, ...), so results do not depend on
evaluation order or on how work is split across threads.
"""

from typing import Tuple

import numpy as np

SWEEP_STREAM = 0
TOMOGRAPHY_STREAM = 1
FIT_STREAM = 2


def _spawn_key(key: Tuple[int, ...]) -> Tuple[int, ...]:
    for part in key:
        if int(part) != part or part < 0:
            raise ValueError(f"stream key parts must be nonnegative integers, got {key}")
    return tuple(int(part) for part in key)


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for (seed, key)."""

    if int(seed) != seed or seed < 0:
        raise ValueError(f"seed must be a nonnegative integer, got {seed!r}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=_spawn_key(key))
    return np.random.Generator(np.random.Philox(sequence))
