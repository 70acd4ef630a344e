"""Deterministic seed derivation and the pinned integer hash.

Every random quantity in the package flows through `numpy.random.Generator`
instances created from seeds derived here. Two primitives are pinned:

* ``derive_seed``: BLAKE2b over the little-endian encoding of its integer
  parts (strings allowed as namespacing tags). Used for per-trial and
  per-role seeds, so reruns with the same master seed reproduce byte-for-byte.
* ``splitmix64``: the SplitMix64 finalizer, used to evaluate seeded-hash
  queries on symbol arrays without materializing per-query tables.

Neither primitive depends on the platform or on Python's salted ``hash``.
"""
from __future__ import annotations

import hashlib

import numpy as np

_U64 = np.uint64


def derive_seed(*parts: int | str) -> int:
    """Derive a 63-bit seed from integer/string parts via BLAKE2b."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, str):
            data = part.encode("utf-8")
            h.update(b"s" + len(data).to_bytes(4, "little") + data)
        else:
            h.update(b"i" + int(part).to_bytes(16, "little", signed=True))
    return int.from_bytes(h.digest(), "little") >> 1


def rng_from(seed: int) -> np.random.Generator:
    """PCG64 generator for a derived seed (never the global RNG)."""
    return np.random.default_rng(seed)


def splitmix64(x) -> np.ndarray:
    """SplitMix64 finalizer on uint64 scalars or arrays (wraps mod 2^64)."""
    with np.errstate(over="ignore"):
        z = np.asarray(x, dtype=_U64) + _U64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        return z ^ (z >> _U64(31))


def hash_bits(seed: int, symbols) -> np.ndarray:
    """Seeded {0,1} hash of each symbol; the basis of random sign queries."""
    sym = np.asarray(symbols, dtype=_U64)
    with np.errstate(over="ignore"):
        mixed = splitmix64(sym ^ splitmix64(_U64(seed & 0xFFFFFFFFFFFFFFFF)))
    return (mixed >> _U64(63)).astype(np.uint8)
