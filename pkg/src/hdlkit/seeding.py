"""Named sub-streams off a single 64-bit seed, stable across runs and platforms."""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, *names: object) -> np.random.Generator:
    """A generator keyed by (seed, names...) so pipeline stages draw independent streams."""
    tag = "/".join(str(n) for n in names).encode("utf-8")
    h = int.from_bytes(hashlib.blake2b(tag, digest_size=8).digest(), "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, h]))
