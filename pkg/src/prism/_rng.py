"""Counter-based random streams derived from a single integer seed."""
from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent Philox stream for ``(seed, *keys)``.

    Keys may be ints or short strings; the same tuple always yields the same
    stream regardless of call order elsewhere in the program.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
