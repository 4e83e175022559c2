"""Counter-based deterministic randomness.

Every random decision in the pipeline is a pure function of a 64-bit seed
plus a context key (domain tag, pyramid level, grid cell, axis, ...).
Draws are therefore order-independent: cells, frames, and levels can be
processed in any order, or in parallel, with bit-identical results.
"""

from __future__ import annotations

import hashlib
import struct

# Domain tags keep independent uses of the same seed from colliding.
DOMAIN_OFFSET = 1  # fragment offset draws
DOMAIN_FRAME = 2  # temporal frame-selection jitter

_MASK64 = (1 << 64) - 1


def derive_u64(seed: int, *context: int) -> int:
    """Hash (seed, context...) to a uniform 64-bit integer."""
    h = hashlib.blake2b(digest_size=8)
    h.update(struct.pack("<Q", seed & _MASK64))
    for c in context:
        h.update(struct.pack("<q", c))
    return int.from_bytes(h.digest(), "little")


def bounded(seed: int, *context: int, n: int) -> int:
    """Deterministic draw in [0, n).

    Uses the multiply-shift reduction, which is monotone in the raw 64-bit
    value (so a shared draw maps to the same relative position for any n)
    and has bias below n / 2**64.
    """
    if n <= 0:
        raise ValueError(f"n must be positive, got {n}")
    return (derive_u64(seed, *context) * n) >> 64
