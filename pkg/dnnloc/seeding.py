"""Named random sub-streams derived from a single run seed."""

import hashlib

import numpy as np


def stream_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator for one purpose ("init", "hyperopt", "candidates", ...).

    The same (seed, name) pair always yields the same stream, and streams with
    different names do not overlap.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, stream_key(name)]))


def derive_seed(seed: int, name: str) -> int:
    """Plain integer seed for a sub-task (e.g. one hyperopt trial)."""
    return int(substream(seed, name).integers(0, 2**31 - 1))
