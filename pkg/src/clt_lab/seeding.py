"""Splittable, order-independent random streams.

Every stochastic routine takes a seed and derives child streams keyed by
(seed, label, index...). Two properties matter: the same key always yields the
same stream, and distinct keys yield statistically independent streams. Both
come from numpy's SeedSequence. Because streams are keyed rather than drawn
sequentially, results do not depend on execution order, which is what makes
byte-identical reruns possible under any scheduling.
"""
from __future__ import annotations

import zlib
from typing import Union

import numpy as np

RngSeed = Union[int, np.random.Generator, np.random.SeedSequence]


def _key_part(part) -> int:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("seed key parts must be nonnegative")
        return int(part)
    if isinstance(part, str):
        # stable across runs and platforms, unlike hash()
        return zlib.crc32(part.encode("utf-8"))
    raise TypeError(f"unsupported seed key part: {part!r}")


def _entropy_of(seed) -> list:
    if isinstance(seed, np.random.SeedSequence):
        if seed.entropy is None:
            return [0]
        return [int(e) for e in np.atleast_1d(seed.entropy)]
    return [_key_part(seed)]


def child_rng(seed, *branch) -> np.random.Generator:
    """Generator for the stream keyed by (seed, *branch).

    `seed` may be an int, a SeedSequence, or an existing Generator (returned
    as-is only when no branch is given, for call sites that already hold a
    stream). Branch labels are ints or strings.
    """
    if isinstance(seed, np.random.Generator):
        if branch:
            raise TypeError("cannot branch from a live Generator; pass the seed")
        return seed
    keys = _entropy_of(seed) + [_key_part(b) for b in branch]
    return np.random.default_rng(np.random.SeedSequence(keys))


def child_seed(seed, *branch) -> np.random.SeedSequence:
    """Branchable child key, for handing to routines that derive own streams."""
    if isinstance(seed, np.random.Generator):
        raise TypeError("cannot derive a child seed from a live Generator")
    return np.random.SeedSequence(_entropy_of(seed) +
                                  [_key_part(b) for b in branch])
