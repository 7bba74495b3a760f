"""Keyed random streams.

Every stochastic step draws from a generator derived from a master seed and
a tuple of integer keys, so results do not depend on evaluation order.
"""
import zlib

import numpy as np


def _as_int(key):
    if isinstance(key, (int, np.integer)):
        if key < 0:
            raise ValueError("rng keys must be non-negative")
        return int(key)
    return zlib.crc32(str(key).encode())


def keyed_rng(seed, *keys):
    """Return a Generator seeded by ``seed`` and the keys that follow."""
    return np.random.default_rng(np.random.SeedSequence([_as_int(seed), *map(_as_int, keys)]))


def mask_of(nodes):
    m = 0
    for v in nodes:
        m |= 1 << int(v)
    return m
