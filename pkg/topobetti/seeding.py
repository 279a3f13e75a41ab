"""
Named random streams.

Every run has a single integer seed. Components draw from their own stream,
derived as SeedSequence(seed, spawn_key=(crc32(component name),)), so adding
a consumer never shifts the numbers another component sees.
"""

import zlib

import numpy as np


def stream_id(component: str) -> int:
    """Stable 32-bit id of a component name"""
    return zlib.crc32(component.encode("utf-8"))


def derive_rng(seed: int, component: str) -> np.random.Generator:
    """
    Build the generator for one component of a run

    Args:
        seed: Run seed (non-negative integer)
        component: Stream name, e.g. "init", "shuffle", "subsample"

    Returns:
        A numpy Generator private to that (seed, component) pair
    """
    sequence = np.random.SeedSequence(int(seed), spawn_key=(stream_id(component),))
    return np.random.default_rng(sequence)
