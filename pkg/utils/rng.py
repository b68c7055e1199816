"""
Keyed random streams.

Every consumer of randomness asks for a stream by a purpose tag and a tuple of
integer keys, e.g. ``stream("bootstrap", train_seed, member)``. Streams are
Philox counter-based generators whose key is a hash of (tag, keys), so the
values depend only on the key and never on call order, process or platform.
"""

import hashlib
import struct
from typing import Tuple

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def stream_key(purpose: str, *keys: int) -> Tuple[int, int]:
    """
    Derive a 128-bit Philox key from a purpose tag and integer keys.

    Args:
        purpose: Stream purpose tag ("bootstrap", "init", "shuffle", ...)
        *keys: Integer keys (seed, member index, epoch, ...)

    Returns:
        Two 64-bit words
    """
    digest = hashlib.blake2b(purpose.encode("utf-8"), digest_size=8).digest()
    state = struct.unpack("<Q", digest)[0]
    for key in keys:
        state = _splitmix64(state ^ (int(key) & _MASK64))
    return state, _splitmix64(state ^ 0xD1B54A32D192ED03)


def stream(purpose: str, *keys: int) -> np.random.Generator:
    """
    Create the generator for one keyed stream.

    Args:
        purpose: Stream purpose tag
        *keys: Integer keys

    Returns:
        A fresh numpy Generator positioned at the start of the stream
    """
    hi, lo = stream_key(purpose, *keys)
    return np.random.Generator(np.random.Philox(key=(hi << 64) | lo))


def derive_seed(purpose: str, *keys: int) -> int:
    """
    Derive a non-negative 31-bit integer seed, for APIs that take plain seeds.

    Args:
        purpose: Stream purpose tag
        *keys: Integer keys

    Returns:
        Integer in [0, 2**31)
    """
    hi, _ = stream_key(purpose, *keys)
    return int(hi >> 33)
