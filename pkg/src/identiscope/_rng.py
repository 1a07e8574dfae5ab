"""Deterministic random residues.

Every random draw in the analysis engines is derived from a context tag
(seed, trial, attempt, symbol name, ...) through a keyed hash, never from
Python's process-randomized ``hash``.  This makes reports byte-reproducible
across processes and platforms for a fixed seed.
"""

from __future__ import annotations

import random
from hashlib import blake2b


def _seed_int(parts) -> int:
    tag = "\x1f".join(str(p) for p in parts).encode()
    return int.from_bytes(blake2b(tag, digest_size=8).digest(), "big")


def residue(parts, p: int) -> int:
    """Uniform residue in [1, p-1] determined entirely by ``parts``."""
    return random.Random(_seed_int(parts)).randrange(1, p)
