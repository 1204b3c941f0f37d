"""Counter-based RNG streams: one Philox generator per (seed, stream) pair.

Philox is counter-based, so streams derived from the same seed are
independent and reproducible regardless of draw order elsewhere.
"""
import numpy as np
from numpy.random import Generator, Philox

MASK64 = (1 << 64) - 1


def stream_rng(seed: int, stream: int) -> Generator:
    return Generator(Philox(key=np.array([seed & MASK64, stream & MASK64],
                                         dtype=np.uint64)))
