"""Seeded deterministic randomness.

All nondeterminism in a run (challenge nonces, ephemeral channel keys,
report jitter) flows from one integer seed through labelled child streams,
so two runs with the same seed are byte-identical regardless of transport
or host.
"""

import hashlib
import random
import struct


def derive_key_seed(label: str, seed: int) -> bytes:
    """32 bytes of key material bound to a label and an integer seed."""
    return hashlib.sha256(label.encode() + struct.pack("<q", seed)).digest()


class DeterministicRng:
    def __init__(self, seed: int, label: str = "root"):
        self._label = label
        self._rng = random.Random(derive_key_seed(label, seed))
        self._seed = seed

    def child(self, label: str) -> "DeterministicRng":
        """Independent stream; drawing from one never perturbs another."""
        return DeterministicRng(self._seed, f"{self._label}/{label}")

    def bytes(self, n: int) -> bytes:
        return self._rng.randbytes(n)

    def u64(self) -> int:
        return self._rng.getrandbits(64)

    def int_range(self, lo: int, hi: int) -> int:
        return self._rng.randint(lo, hi)

    def choice(self, seq):
        return self._rng.choice(seq)

    def gauss(self, mu: float, sigma: float) -> float:
        return self._rng.gauss(mu, sigma)
