"""Seed derivation for reproducible, resumable sweeps.

Child seeds come from numpy's ``SeedSequence``: the master seed is the entropy and
``(point, index, stage)`` the spawn key, hashed into a 64-bit state word.  Every
artifact therefore depends only on its own coordinates, so regenerating one SCM or one
dataset never disturbs any other.
"""
from enum import IntEnum

import numpy as np


class Stage(IntEnum):
    GRAPH = 0
    SCM = 1
    DATA = 2
    SIZE = 3


def derive_seed(master_seed: int, point: int, index: int, stage: Stage) -> int:
    sequence = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(point), int(index), int(stage)))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    """The one generator used everywhere: PCG64 seeded through ``SeedSequence``."""
    return np.random.Generator(np.random.PCG64(int(seed)))
