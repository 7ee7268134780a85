"""Deterministic, splittable random streams.

Every random decision in the package draws from a Philox counter-based
generator keyed by ``(seed, stream, *subkeys)``.  Streams are fully
stateless: the generator for e.g. the masking of batch 7 in epoch 2 can be
reconstructed from scratch, which is what makes checkpoint-resume
reproduce an uninterrupted run bit for bit.
"""

from __future__ import annotations

import hashlib

import numpy as np

# Stream identifiers.  Values are arbitrary but frozen: changing them
# changes every derived random stream.
INIT_STREAM = 1
CORPUS_STREAM = 2
SHUFFLE_STREAM = 3
MASK_STREAM = 4
DROPOUT_STREAM = 5
DATA_STREAM = 6


def make_rng(seed: int, *subkeys: int) -> np.random.Generator:
    """Return a Generator for the stream identified by (seed, *subkeys)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in subkeys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def stable_hash(name: str) -> int:
    """64-bit hash of a string, stable across processes and platforms."""
    return int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:8], "little")


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02,
                     clip: float = 2.0, dtype=np.float32) -> np.ndarray:
    """Normal(0, std) samples rejected outside +-clip*std.

    Rejection resampling keeps the distribution exact rather than clamping
    mass onto the boundary.
    """
    out = rng.normal(0.0, std, size=shape)
    bad = np.abs(out) > clip * std
    while bad.any():
        out[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) > clip * std
    return out.astype(dtype)
