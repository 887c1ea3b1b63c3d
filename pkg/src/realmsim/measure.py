"""Measurement arithmetic: SHA-256 extend chains over boot-time records.

An initial measurement starts from 32 zero bytes, absorbs a creation
record derived from the realm's launch parameters, then one 40-byte
record per populated page in population order. Runtime measurement slots
extend the same way with bare 32-byte digests.
"""

import hashlib
import struct
from dataclasses import dataclass

DIGEST_SIZE = 32
ZERO_DIGEST = bytes(DIGEST_SIZE)
PERSONALIZATION_SIZE = 64
CHALLENGE_SIZE = 64
REM_SLOTS = 4


def extend(digest: bytes, data: bytes) -> bytes:
    """One hash-chain step: SHA-256(digest || data)."""
    if len(digest) != DIGEST_SIZE:
        raise ValueError("extend expects a 32-byte running digest")
    return hashlib.sha256(digest + data).digest()


def content_digest(content: bytes) -> bytes:
    return hashlib.sha256(content).digest()


@dataclass(frozen=True)
class MeasurementRecord:
    """Fixed 40-byte unit of boot measurement: content digest + load address."""

    content_digest: bytes
    target_addr: int

    def to_bytes(self) -> bytes:
        if len(self.content_digest) != DIGEST_SIZE:
            raise ValueError("content digest must be 32 bytes")
        return self.content_digest + struct.pack("<Q", self.target_addr)


def measure_content(content: bytes, target_addr: int) -> MeasurementRecord:
    return MeasurementRecord(content_digest(content), target_addr)


def encode_entry_point(granule_index: int, offset: int) -> bytes:
    return struct.pack("<QQ", granule_index, offset)


def creation_record(personalization: bytes, entry_point) -> bytes:
    """Digest of the launch parameters absorbed as the chain's first record."""
    if len(personalization) != PERSONALIZATION_SIZE:
        raise ValueError("personalization must be 64 bytes")
    return hashlib.sha256(personalization + encode_entry_point(*entry_point)).digest()


def initial_measurement(personalization: bytes, entry_point) -> bytes:
    return extend(ZERO_DIGEST, creation_record(personalization, entry_point))


def extend_with_segment(rim: bytes, content: bytes, target_addr: int) -> bytes:
    return extend(rim, measure_content(content, target_addr).to_bytes())


def image_measurement(personalization: bytes, entry_point, segments) -> bytes:
    """Expected boot measurement for an ordered list of (addr, content) segments."""
    rim = initial_measurement(personalization, entry_point)
    for target_addr, content in segments:
        rim = extend_with_segment(rim, content, target_addr)
    return rim
