"""Deterministic random number generation.

All stochastic code in this package draws from numpy's Philox bit
generator, a named 64-bit counter-based PRNG with a stable cross-platform
stream. Streams are derived from an integer seed plus an optional tuple of
stream keys via numpy's SeedSequence spawning, so independent components
(episodes, training stages, planning steps) get decorrelated but fully
reproducible streams.
"""

from __future__ import annotations

import numpy as np


def philox(seed: int, *key: int) -> np.random.Generator:
    """Generator for (seed, key...). Same arguments, same stream, any platform."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(seed=ss))
