"""Reproducible named random streams.

A stream is a 64-bit seed; children are derived by hashing
(parent seed, label, index), so any sub-stream can be rebuilt without
replaying its siblings.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def derive_seed(seed: int, label: str, index: int = 0) -> int:
    msg = f"{int(seed) & MASK64}/{label}/{int(index)}".encode()
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


class RngStream:
    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64

    def __repr__(self):
        return f"RngStream({self.seed})"

    def child(self, label: str, index: int = 0) -> "RngStream":
        return RngStream(derive_seed(self.seed, label, index))

    def generator(self) -> np.random.Generator:
        """A fresh generator; every call restarts the same sequence."""
        return np.random.Generator(np.random.PCG64(self.seed))
