"""Named, reproducible random streams.

Every stream is a Philox (counter-based) generator keyed by the run seed plus
a tuple of integers, typically ``(purpose, replica)``.  Two streams with the
same key produce the same numbers no matter which order replicas are run in.
"""

from __future__ import annotations

import numpy as np

# Purpose codes that go into the spawn key. Append only; never renumber.
PURPOSES = {
    "silo": 0,
    "coupling": 1,
    "ism-init": 2,
    "ism-noise": 3,
    "reversibility": 4,
    "splitting": 5,
    "walk": 6,
    "diamond": 7,
    "selftest": 8,
}


def stream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Return the generator for ``(seed, purpose, *index)``."""
    if purpose not in PURPOSES:
        raise KeyError(f"unknown stream purpose {purpose!r}")
    key = (PURPOSES[purpose],) + tuple(int(i) for i in index)
    seq = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=key)
    return np.random.Generator(np.random.Philox(seq))
