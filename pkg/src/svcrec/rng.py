"""Named random sub-streams derived from a single seed."""
import zlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a generator for stream ``name`` that is independent of the others.

    Re-seeding one component (negatives, nonevents, init, synth, ...) does not
    shift the draws seen by the rest.
    """
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
