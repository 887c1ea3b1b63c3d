"""Realm image bundles published by the trusted verifier.

A bundle holds the ordered page segments, launch parameters, metadata
(including the provider key pinned into the image), and the reference
values a relying party needs to appraise reports from realms booted
from this image. The verifier signs everything; fetching re-checks the
signature and recomputes the expected boot measurement from the
segments, so a reordered or altered page is caught before any memory
is delegated.
"""

import hashlib
from dataclasses import dataclass, replace

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from . import codec
from .attestation import ReferenceValues
from .errors import DecodeError, ImageVerificationError
from .granules import GRANULE_SIZE
from .measure import PERSONALIZATION_SIZE, image_measurement
from .rng import DeterministicRng, derive_key_seed

DEFAULT_MACHINE_SEED = 2024
DEFAULT_VERIFIER_SEED = 7001
DEFAULT_PROVIDER_SEED = 9002

FIRMWARE_STAGES = (b"sim-secure-monitor v1", b"sim-realm-monitor v1")


def platform_key_seed(machine_seed: int) -> bytes:
    return derive_key_seed("platform-key", machine_seed)


def platform_measurements() -> tuple:
    return tuple(hashlib.sha256(stage).digest() for stage in FIRMWARE_STAGES)


def verifier_signing_key(verifier_seed: int) -> Ed25519PrivateKey:
    return Ed25519PrivateKey.from_private_bytes(derive_key_seed("verifier-key", verifier_seed))


def provider_key_seed(provider_seed: int) -> bytes:
    return derive_key_seed("provider-key", provider_seed)


def platform_public_key(machine_seed: int) -> bytes:
    key = Ed25519PrivateKey.from_private_bytes(platform_key_seed(machine_seed))
    return key.public_key().public_bytes_raw()


@dataclass(frozen=True)
class RealmImage:
    segments: tuple  # ordered (target_addr, content) pairs
    entry_point: tuple  # (logical granule index, offset)
    personalization: bytes
    provider_public_key: bytes
    image_size_bytes: int
    description: str
    refs: ReferenceValues
    signature: bytes


def _signed_payload(image: RealmImage) -> bytes:
    return codec.encode(
        {
            0: [[addr, content] for addr, content in image.segments],
            1: list(image.entry_point),
            2: image.personalization,
            3: {
                0: image.image_size_bytes,
                1: image.description,
                2: image.provider_public_key,
            },
            4: {
                0: image.refs.expected_rim,
                1: [list(ms) for ms in image.refs.accepted_platform_measurements],
                2: image.refs.platform_public_key,
            },
        }
    )


def build_image(segments, entry_point, personalization, provider_public_key, description, machine_seed=DEFAULT_MACHINE_SEED, verifier_seed=DEFAULT_VERIFIER_SEED) -> RealmImage:
    segments = tuple((int(addr), bytes(content)) for addr, content in segments)
    for _, content in segments:
        if len(content) != GRANULE_SIZE:
            raise ValueError(f"image segments must be {GRANULE_SIZE} bytes")
    if len(personalization) != PERSONALIZATION_SIZE:
        raise ValueError("personalization must be 64 bytes")
    refs = ReferenceValues(
        expected_rim=image_measurement(personalization, entry_point, segments),
        accepted_platform_measurements=(platform_measurements(),),
        platform_public_key=platform_public_key(machine_seed),
    )
    unsigned = RealmImage(
        segments=segments,
        entry_point=(int(entry_point[0]), int(entry_point[1])),
        personalization=bytes(personalization),
        provider_public_key=bytes(provider_public_key),
        image_size_bytes=len(segments) * GRANULE_SIZE,
        description=description,
        refs=refs,
        signature=b"",
    )
    signature = verifier_signing_key(verifier_seed).sign(_signed_payload(unsigned))
    return replace(unsigned, signature=signature)


def encode_image(image: RealmImage) -> bytes:
    payload = codec.decode(_signed_payload(image))
    payload[5] = image.signature
    return codec.encode(payload)


def decode_image(data: bytes) -> RealmImage:
    obj = codec.decode(data)
    try:
        segments = tuple((addr, content) for addr, content in obj[0])
        entry_point = (obj[1][0], obj[1][1])
        personalization = obj[2]
        meta = obj[3]
        refs_obj = obj[4]
        signature = obj[5]
        refs = ReferenceValues(
            expected_rim=refs_obj[0],
            accepted_platform_measurements=tuple(tuple(ms) for ms in refs_obj[1]),
            platform_public_key=refs_obj[2],
        )
        image = RealmImage(
            segments=segments,
            entry_point=entry_point,
            personalization=personalization,
            provider_public_key=meta[2],
            image_size_bytes=meta[0],
            description=meta[1],
            refs=refs,
            signature=signature,
        )
    except (KeyError, TypeError, ValueError, IndexError):
        raise DecodeError("image bundle missing required fields") from None
    return image


def verifier_public_key(verifier_seed: int = DEFAULT_VERIFIER_SEED) -> bytes:
    return verifier_signing_key(verifier_seed).public_key().public_bytes_raw()


def verify_image(image: RealmImage, trusted_verifier_key: bytes) -> None:
    try:
        Ed25519PublicKey.from_public_bytes(trusted_verifier_key).verify(
            image.signature, _signed_payload(image)
        )
    except (InvalidSignature, ValueError):
        raise ImageVerificationError("verifier signature does not check out") from None
    recomputed = image_measurement(image.personalization, image.entry_point, image.segments)
    if recomputed != image.refs.expected_rim:
        raise ImageVerificationError("expected measurement does not match the segment chain")


def fetch_realm_image(path, trusted_verifier_key: bytes) -> RealmImage:
    """Load a bundle from disk and refuse it unless signature and measurement hold."""
    with open(path, "rb") as f:
        data = f.read()
    try:
        image = decode_image(data)
    except DecodeError as exc:
        raise ImageVerificationError(f"bundle does not decode: {exc}") from None
    verify_image(image, trusted_verifier_key)
    return image


def demo_segments(code_granules: int = 4, work_granules: int = 4, seed: int = 11):
    """Synthetic program pages plus zeroed working pages for model storage."""
    rng = DeterministicRng(seed, "demo-image")
    segments = []
    for i in range(code_granules):
        segments.append((i * GRANULE_SIZE, rng.bytes(GRANULE_SIZE)))
    for i in range(work_granules):
        segments.append(((code_granules + i) * GRANULE_SIZE, bytes(GRANULE_SIZE)))
    return segments


def synthetic_segment(index: int) -> bytes:
    """Deterministic filler page for size-scaling experiments."""
    return (index.to_bytes(8, "little") * (GRANULE_SIZE // 8))
