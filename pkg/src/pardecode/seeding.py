"""Deterministic, label-addressed random streams.

Every random draw in the package flows from one integer seed plus a tuple of
string/int labels, hashed with blake2b so streams are stable across runs,
platforms and process boundaries (unlike the salted builtin ``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np


def stable_hash64(*parts: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        if isinstance(part, bytes):
            h.update(b"b" + part)
        else:
            h.update(b"r" + repr(part).encode("utf-8"))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


def rng_from(seed: int, *labels: object) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, stable_hash64(*labels)])
    )
