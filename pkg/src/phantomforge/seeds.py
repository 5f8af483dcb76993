"""Stable seed derivation (independent of process hash randomization)."""

from __future__ import annotations

import hashlib


def derive_seed(base_seed: int, *parts) -> int:
    """63-bit seed from a base seed and any printable parts."""
    text = repr((int(base_seed),) + tuple(parts)).encode()
    digest = hashlib.sha256(text).digest()
    return int.from_bytes(digest[:8], "little") >> 1
