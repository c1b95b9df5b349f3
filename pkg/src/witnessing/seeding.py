"""Deterministic seed derivation from structured keys."""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Map ``parts`` to a 64-bit seed that is stable across runs and platforms.

    Parts are joined with a unit separator so ``("a", "bc")`` and
    ``("ab", "c")`` differ.
    """
    key = "\x1f".join(str(p) for p in parts).encode("utf-8")
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "big")
