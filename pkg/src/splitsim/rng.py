"""Seeded random sub-streams.

Every consumer of randomness asks for a generator by (seed, stream name,
indices). Streams are independent of call order, so a trial evaluated on
any worker, in any order, sees the same numbers.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("solver", "workload", "noise", "replay", "pool", "overhead")


def _stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def substream(seed: int, name: str, *indices: int) -> np.random.Generator:
    key = (_stream_key(name), *(int(i) for i in indices))
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))
