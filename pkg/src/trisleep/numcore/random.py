"""Deterministic, splittable random streams.

Every stochastic piece of the system (weight init, masking plans, synthetic
data, batch shuffling) draws from a counter-based Philox generator keyed by
a root seed plus a path of string/int tags. Distinct paths give independent
streams; the same path always gives the same stream, regardless of how many
other streams were consumed before it.
"""

import hashlib

import numpy as np


def _tag_word(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    digest = hashlib.blake2s(str(tag).encode("utf-8"), digest_size=4).digest()
    return int.from_bytes(digest, "little")


def seed_for(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed)] + [_tag_word(t) for t in tags])


def generator(seed: int, *tags) -> np.random.Generator:
    """A Philox generator for the stream named by (seed, *tags)."""
    return np.random.Generator(np.random.Philox(seed_for(seed, *tags)))
