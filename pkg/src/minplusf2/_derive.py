"""Counter-based randomness derivation.

Every random draw in the package flows from a user seed through a Philox
generator keyed by a hashed tuple (module tag, seed, indices...).  Derivation
is a pure function of the tuple, never a shared sequential stream, so results
are bit-identical regardless of scheduling or worker count.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_rng(*key_parts) -> np.random.Generator:
    """Philox generator keyed by a stable hash of the given tuple."""
    blob = "\x1f".join(str(p) for p in key_parts).encode()
    digest = hashlib.blake2b(blob, digest_size=16).digest()
    key = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.Philox(key=key))


def derive_bits(size: int, *key_parts) -> np.ndarray:
    """Uniform 0/1 uint8 array of the given length, a pure function of the
    key tuple (blake2b in counter mode; cheaper than a generator object for
    the many small draws the amplification loop makes)."""
    blob = "\x1f".join(str(p) for p in key_parts).encode()
    need = (size + 7) // 8
    chunks = []
    for ctr in range((need + 63) // 64):
        h = hashlib.blake2b(blob, digest_size=64, salt=ctr.to_bytes(8, "little"))
        chunks.append(h.digest())
    raw = b"".join(chunks)[:need]
    return np.unpackbits(np.frombuffer(raw, np.uint8), bitorder="little")[:size]
