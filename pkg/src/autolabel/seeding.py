"""Named random streams derived from one run seed."""
import zlib

import numpy as np


def stream_seed(seed, name):
    """Integer seed for the stream ``name`` under the run ``seed``."""
    ss = np.random.SeedSequence([int(seed), zlib.crc32(name.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def rng(seed, name):
    return np.random.default_rng([int(seed), zlib.crc32(name.encode("utf-8"))])
