"""Labeled sub-seed derivation from one master seed."""
import zlib

import numpy as np


def derive_rng(master_seed: int, *labels) -> np.random.Generator:
    """Generator keyed by ``(master_seed, labels...)``.

    Labels are hashed with crc32, so a stream only changes when its own
    labels change, never when unrelated streams are added.
    """
    key = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for label in labels:
        key.append(zlib.crc32(str(label).encode()))
    return np.random.default_rng(np.random.SeedSequence(key))
