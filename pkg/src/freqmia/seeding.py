"""Deterministic derivation of sub-seeds from one global seed.

Every random stream in an experiment is keyed by the global seed plus a
purpose string (and, for per-sample streams, the sample id). Streams are
therefore independent of each other and of iteration order: adding a new
consumer never perturbs existing ones.
"""

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *parts: str) -> int:
    """Hash a global seed and purpose strings into a 64-bit sub-seed."""
    material = ":".join([str(int(seed) & _MASK64), *parts]).encode("utf-8")
    digest = hashlib.sha256(material).digest()
    return int.from_bytes(digest[:8], "little")


def derive_rng(seed: int, *parts: str) -> np.random.Generator:
    """A fresh generator seeded by ``derive_seed(seed, *parts)``."""
    return np.random.default_rng(derive_seed(seed, *parts))
