"""Named random substreams derived from a single root seed."""

from __future__ import annotations

import zlib

import numpy as np


def stream_seed(root: int, stream: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(root) & 0xFFFFFFFF, zlib.crc32(stream.encode("utf-8"))])


def rng_for(root: int, stream: str) -> np.random.Generator:
    """Generator for ``stream``; consumption in one stream never shifts another."""
    return np.random.default_rng(stream_seed(root, stream))


def int_seed(root: int, stream: str) -> int:
    """A 31-bit integer seed for libraries that only take ints."""
    return int(stream_seed(root, stream).generate_state(1)[0] & 0x7FFFFFFF)
