"""Counter-based random streams for reproducible parallel Monte Carlo.

Every path owns an independent Philox stream keyed by (seed, path index),
so a path is a pure function of its index: results are bit-identical
regardless of chunking, worker count, or scheduling.  A small stream_id
carves out auxiliary per-path streams (bridge corrections, overflow jump
draws) without disturbing the main one.
"""

from __future__ import annotations

import numpy as np

_STREAM_SHIFT = 48
_MAX_INDEX = 1 << _STREAM_SHIFT

MAIN_STREAM = 0
BRIDGE_STREAM = 1
OVERFLOW_STREAM = 2


def path_generator(seed: int, path_index: int,
                   stream: int = MAIN_STREAM) -> np.random.Generator:
    """Independent generator for one (seed, path, stream) triple."""
    if not 0 <= path_index < _MAX_INDEX:
        raise ValueError(f"path index {path_index} out of range")
    key = [np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
           np.uint64((stream << _STREAM_SHIFT) | path_index)]
    return np.random.Generator(np.random.Philox(key=key))
