"""Seedable counter-based random streams.

All stochastic code in the package draws from Philox substreams keyed by
``(seed, index)``.  Philox is counter-based, so substreams for different
indices are statistically independent and can be consumed in any order or
in parallel without affecting each other -- reruns with the same seed are
bit-identical regardless of scheduling.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, index: int) -> np.random.Generator:
    """Return the generator for substream ``index`` of the root ``seed``."""
    key = [seed & _MASK64, index & _MASK64]
    return np.random.Generator(np.random.Philox(key=key))
