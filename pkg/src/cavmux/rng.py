"""Named, order-independent random streams.

Every stochastic component asks for its own generator keyed by the run
seed plus a label (and usually an emitter id), so results never depend on
the order in which components draw numbers.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def stream(seed: int, *labels) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=tuple(_key(p) for p in labels))
    return np.random.Generator(np.random.PCG64(ss))
