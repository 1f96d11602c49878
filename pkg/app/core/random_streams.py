# core/random_streams.py
"""
Named random streams.

Every random draw in thermaleq comes from a stream identified by
(seed, label). The stream is numpy's counter-based Philox-4x64-10 generator
keyed by the 128-bit blake2b digest of the UTF-8 string "<seed>/<label>",
counter starting at zero. Two streams with different labels are independent,
and adding a new consumer never shifts the numbers an existing one sees.
"""

import hashlib

import numpy as np

from app.core.error_handling import ValidationError

MAX_SEED = 2 ** 64 - 1


def stream_key(seed: int, label: str) -> int:
    """128-bit Philox key for (seed, label)."""
    if not 0 <= int(seed) <= MAX_SEED:
        raise ValidationError(f"seed must be a 64-bit unsigned integer, got {seed}")
    digest = hashlib.blake2b(f"{int(seed)}/{label}".encode("utf-8"), digest_size=16).digest()
    return int.from_bytes(digest, "little")


def random_stream(seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=stream_key(seed, label)))
