"""Named random substreams derived from a single root seed.

Each consumer (split, init, augment, patch sampling, ...) asks for its own
stream by name, so enabling or disabling one feature never shifts the random
numbers seen by another.
"""
import zlib

import numpy as np


def substream(seed: int, name: str) -> int:
    """Derive a 32-bit seed for the stream ``name`` under root ``seed``."""
    key = zlib.crc32(name.encode("utf-8"))
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, key]).generate_state(1)[0])


def rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(substream(seed, name))
