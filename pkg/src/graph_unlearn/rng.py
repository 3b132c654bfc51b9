"""Seed derivation so each pipeline stage owns an independent RNG stream."""

import hashlib
import json

import numpy as np


def derive_seed(seed, *tags):
    """Stable 63-bit seed from ``seed`` and any JSON-serializable tags."""
    payload = json.dumps([int(seed), *tags], separators=(",", ":")).encode()
    digest = hashlib.blake2b(payload, digest_size=8).digest()
    return int.from_bytes(digest, "little") & ((1 << 63) - 1)


def stream(seed, *tags):
    return np.random.default_rng(derive_seed(seed, *tags))
