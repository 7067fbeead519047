"""Counter-based random streams.

Every stream is a Philox generator keyed on ``(seed, setting)`` with the
block index and a component tag placed in the high words of the 256-bit
counter.  Streams never overlap as long as a single stream draws fewer than
2**128 blocks of output, and any block can be regenerated independently of
the others, so results do not depend on how blocks are scheduled.
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1

# component tags
MU = 0
EPS = 1
DESIGN = 2
BETA = 3


def setting_key(*parts) -> int:
    """Stable 64-bit integer for an arbitrary tuple of labels."""
    return zlib.crc32(repr(parts).encode()) & MASK64


def stream(seed: int, setting: int, block: int = 0, component: int = 0) -> np.random.Generator:
    key = ((setting & MASK64) << 64) | (seed & MASK64)
    counter = ((block & MASK64) << 192) | ((component & MASK64) << 128)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))
