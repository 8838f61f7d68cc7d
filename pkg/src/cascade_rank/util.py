"""Small shared helpers."""

from __future__ import annotations

import hashlib


def derive_seed(*parts: object) -> int:
    """Stable 64-bit seed from mixed parts (ints, strings).

    Uses a keyed hash of the string forms, so results are identical across
    processes and runs; never use built-in hash() here, string hashing is
    salted per process.
    """
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.blake2b(joined.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big")
