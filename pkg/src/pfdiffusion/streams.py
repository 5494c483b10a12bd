"""Deterministic RNG stream derivation.

Every random draw in a run comes from a generator derived from the run
seed plus a structured key (purpose tag, step index, particle lineage).
Streams therefore do not depend on scheduling order: stepping particles
in any order, or on any number of workers, yields identical draws.
"""

import numpy as np

# Purpose tags keep key spaces disjoint.
INIT = 0
STEP = 1
RESAMPLE = 2
MEASUREMENT = 3
SIGNAL = 4


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for ``(seed, key...)``, independent across distinct keys."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(key)))


def particle_rng(seed: int, t: int, lineage: tuple) -> np.random.Generator:
    """Stream for one particle's reverse step at time ``t``.

    Keyed by the full ancestry chain, so copies made at a resample event
    (which get fresh ids appended to their lineage) immediately decouple.
    """
    return derive_rng(seed, STEP, t, *lineage)
