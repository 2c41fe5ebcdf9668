"""Deterministic random-stream derivation.

Every random draw in the package comes from a numpy ``Philox`` counter-based
bit generator keyed through ``numpy.random.SeedSequence``.  A stream is
identified by a base seed plus a tuple of integer indices (layer index,
sample index, run index, ...), so identical keys reproduce identical streams
regardless of execution order or thread count.
"""

from __future__ import annotations

import numpy as np

# Stream-kind tags keep unrelated consumers of the same base seed apart.
WEIGHTS = 1
DROPOUT = 2
SHUFFLE = 3
SIGNAL = 4
RUN = 5
NOISE = 6


def rng_for(seed: int, *indices: int) -> np.random.Generator:
    """Return the Philox generator keyed by ``(seed, *indices)``."""
    seq = np.random.SeedSequence([int(seed), *(int(i) for i in indices)])
    return np.random.Generator(np.random.Philox(seq))
