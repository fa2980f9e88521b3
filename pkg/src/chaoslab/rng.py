"""Reproducible random streams keyed by (seed, stream id)."""
import hashlib

import numpy as np


def _key_part(k):
    if isinstance(k, str):
        return int.from_bytes(hashlib.blake2b(k.encode(), digest_size=8).digest(), "little")
    return int(k)


def stream(seed, *key):
    """Philox generator for a seed and a tuple of integer or short-string keys."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key_part(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def as_generator(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return stream(0 if rng is None else rng)
