"""Named, seed-derived random substreams.

Every run derives its randomness from a single integer seed plus short
stream names ("environment", "cooldowns", "policy:ucb", ...). Streams are
independent Philox generators keyed by (seed, crc32(name), ...), so adding
a new consumer never perturbs the draws seen by existing ones.
"""

from __future__ import annotations

import zlib

import numpy as np


def substream(seed: int, *names: str) -> np.random.Generator:
    """Return a generator for the (seed, *names) stream.

    The same (seed, names) always yields the same sequence; distinct names
    yield statistically independent sequences.
    """
    entropy = [int(seed) & 0xFFFFFFFF] + [zlib.crc32(n.encode("utf-8")) for n in names]
    seq = np.random.SeedSequence(entropy)
    return np.random.Generator(np.random.Philox(seq))
