"""Seeded random streams.

Every random draw in the package comes from a generator built by
:func:`substream`, keyed by a master seed plus a path of integer tags.
Streams for different keys are statistically independent, so episodes can
be simulated in any order (or in parallel) with identical results.
"""

from __future__ import annotations

import numpy as np

# Tags separating the phases of an experiment.
CATALOG = 0
TRAIN = 1
EVAL = 2
PROBE = 3
CONTEXTS = 4
BOOTSTRAP = 5
TRAINING = 6

# Tags separating the streams owned by one episode.
ENV = 0
POLICY = 1

MAX_SEED = 2**64 - 1


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MAX_SEED:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def substream(master_seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``(master_seed, *keys)``."""
    entropy = [check_seed(master_seed), *(int(k) for k in keys)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
