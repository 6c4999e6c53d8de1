"""Named random streams derived from a single root seed."""
import zlib

import numpy as np


def stream(seed, name):
    """Independent generator for stage ``name`` (e.g. "split", "mf", "init", "sampler")."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


def stream_seed(seed, name):
    return int(stream(seed, name).integers(2**31 - 1))
