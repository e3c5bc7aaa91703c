"""Named random streams derived from a single run seed.

Every source of randomness in a run (weight init, shuffling, dropout,
subsample mask, sensor placement) draws from its own generator so that
changing how much one consumer draws never shifts another.
"""

import zlib

import numpy as np

STREAMS = ("init", "shuffle", "dropout", "mask", "sensors", "synthetic")


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for the named stream of ``seed``."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, stream_key(name)])


def partial_shuffle(population, k: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``k`` distinct items uniformly via a partial Fisher-Yates shuffle.

    The returned items are in draw order.
    """
    pool = np.array(population, copy=True)
    n = pool.shape[0]
    if k > n:
        raise ValueError(f"cannot draw {k} items from a population of {n}")
    for i in range(k):
        j = i + int(rng.integers(n - i))
        pool[i], pool[j] = pool[j], pool[i]
    return pool[:k]
