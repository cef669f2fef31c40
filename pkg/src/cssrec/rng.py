"""Seeding helpers built on numpy's counter-based Philox generator.

Every stochastic routine in the package draws from its own keyed stream:
the 128-bit Philox key is (seed, blake2b64(tag)), so distinct purposes
(matrix entries, signal supports, noise, shuffles) never share a stream
even when they share a seed.  Derived seeds are plain 64-bit ints, which
keeps them serializable and lets datasets split work per example with
``seed XOR example_index`` independent of generation order.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def tag_word(tag: str) -> int:
    """Stable 64-bit word for a purpose tag (blake2b, platform independent)."""
    return int.from_bytes(hashlib.blake2b(tag.encode(), digest_size=8).digest(), "little")


def derive_seed(seed: int, *parts) -> int:
    """Deterministically derive a 64-bit child seed from a seed and context parts."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(seed & _MASK64).to_bytes(8, "little"))
    for part in parts:
        if isinstance(part, str):
            h.update(b"s" + part.encode())
        else:
            h.update(b"i" + int(part & _MASK64).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")


def stream(seed: int, tag: str) -> np.random.Generator:
    """Generator for one (seed, purpose) pair; independent across tags and seeds."""
    key = np.array([seed & _MASK64, tag_word(tag)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def example_seed(seed: int, index: int) -> int:
    """Per-example seed for dataset splitting: counter-mode XOR rule."""
    return (seed ^ index) & _MASK64
