"""Seed derivation: one master seed, independent named sub-streams."""

import hashlib

import numpy as np


def derive_seed(master: int, tag: str) -> int:
    digest = hashlib.sha256(f"{int(master)}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def substream(master: int, tag: str) -> np.random.Generator:
    """Generator for the sub-stream ``tag`` of ``master``.

    Two different tags give statistically independent streams; the same
    (master, tag) pair always gives the same stream.
    """
    return np.random.default_rng(derive_seed(master, tag))
