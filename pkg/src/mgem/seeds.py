"""Deterministic RNG derivation.

Every random draw in the package flows from a single 64-bit root seed.
Subsystems derive their own independent generator from ``(seed, *tags)``,
so e.g. batch sampling for task 3 and memory selection for task 3 never
share a stream and each is reproducible in isolation.
"""

import hashlib

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _tag_word(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    digest = hashlib.blake2s(str(tag).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_from(seed: int, *tags) -> np.random.Generator:
    """Generator for the stream named by ``(seed, *tags)``.

    Tags may be ints or strings; identical arguments always yield an
    identical stream, on any platform.
    """
    entropy = [int(seed) & _MASK64] + [_tag_word(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))


def derive_seed(seed: int, *tags) -> int:
    """Collapse ``(seed, *tags)`` into a single 64-bit child seed."""
    h = hashlib.blake2s(digest_size=8)
    h.update(int(seed).to_bytes(8, "little", signed=False) if seed >= 0
             else (int(seed) & _MASK64).to_bytes(8, "little"))
    for t in tags:
        h.update(_tag_word(t).to_bytes(8, "little"))
    return int.from_bytes(h.digest(), "little")
