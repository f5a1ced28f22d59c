"""Deterministic 64-bit sub-seed derivation (splitmix64 mixing).

Every randomized choice in the pipeline draws from a Generator seeded by
derive_subseed(master_seed, <sample id or index>, <purpose tag>), so results
are independent of execution order and worker count, and any artifact's
sub-seed can be named from its provenance.
"""

from __future__ import annotations

import hashlib

_M64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def derive_subseed(master_seed: int, *parts) -> int:
    """Mix ints and strings into a 64-bit sub-seed; strings are hashed first."""
    s = master_seed & _M64
    for p in parts:
        if isinstance(p, str):
            p = int.from_bytes(hashlib.blake2b(p.encode(), digest_size=8).digest(), "big")
        s = splitmix64(s ^ (int(p) & _M64))
    return s
