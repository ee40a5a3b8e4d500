"""Seed derivation.

Every random draw in the package goes through :func:`make_rng`, which builds a
Philox (counter-based) generator from a master seed plus a tuple of purpose
tags.  Two calls with the same ``(seed, *tags)`` always yield the same stream,
and streams with different tags are statistically independent, so adding a new
consumer never shifts the randomness of an existing one.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError(f"negative seed tag: {tag}")
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def seed_sequence(seed: int, *tags) -> np.random.SeedSequence:
    return np.random.SeedSequence([_tag_to_int(seed), *(_tag_to_int(t) for t in tags)])


def make_rng(seed: int, *tags) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed_sequence(seed, *tags)))


def derive_seed(seed: int, *tags) -> int:
    """A 32-bit integer seed for ``(seed, *tags)``, for APIs that take ints."""
    return int(seed_sequence(seed, *tags).generate_state(1, dtype=np.uint32)[0])
