"""Attestation tokens, report assembly, and the appraisal verdict.

A report carries two tokens. The realm token holds the boot-time
measurement, the four runtime measurement slots, the personalization
value, and the verifier's challenge. The platform token attests the
simulated firmware stack and is signed by the platform key held in
root-world memory; its signed payload includes a digest of the realm
token bytes, which is what binds the two halves together.
"""

import hashlib
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey

from . import codec
from .errors import DecodeError
from .measure import CHALLENGE_SIZE, DIGEST_SIZE, PERSONALIZATION_SIZE, REM_SLOTS

SCHEME_ED25519 = 1

LIFECYCLE_SECURED = 0
LIFECYCLE_DEBUG = 1

REASON_DECODE = "DecodeError"
REASON_SIGNATURE = "SignatureMismatch"
REASON_BINDING = "BindingMismatch"
REASON_CHALLENGE = "ChallengeMismatch"
REASON_RIM = "RimMismatch"
REASON_PLATFORM = "PlatformMismatch"
REASON_DEBUG = "DebugPlatform"


@dataclass(frozen=True)
class Verdict:
    accepted: bool
    reason: str | None = None

    @classmethod
    def accept(cls) -> "Verdict":
        return cls(True, None)

    @classmethod
    def reject(cls, reason: str) -> "Verdict":
        return cls(False, reason)


@dataclass(frozen=True)
class RealmToken:
    rim: bytes
    rem: tuple  # REM_SLOTS digests
    personalization: bytes
    challenge: bytes
    public_key_hash: bytes  # hash of the platform key this token expects to be bound by


@dataclass(frozen=True)
class PlatformToken:
    measurements: tuple  # firmware stage digests
    lifecycle_state: int
    binding: bytes  # digest of the realm token bytes
    signature: bytes


@dataclass(frozen=True)
class AttestationReport:
    scheme: int
    realm_token: RealmToken
    platform_token: PlatformToken


@dataclass(frozen=True)
class ReferenceValues:
    expected_rim: bytes
    accepted_platform_measurements: tuple  # tuple of measurement tuples
    platform_public_key: bytes

    def to_json_dict(self) -> dict:
        return {
            "expected_rim": self.expected_rim.hex(),
            "accepted_platform_measurements": [
                [m.hex() for m in ms] for ms in self.accepted_platform_measurements
            ],
            "platform_public_key": self.platform_public_key.hex(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ReferenceValues":
        return cls(
            expected_rim=bytes.fromhex(data["expected_rim"]),
            accepted_platform_measurements=tuple(
                tuple(bytes.fromhex(m) for m in ms)
                for ms in data["accepted_platform_measurements"]
            ),
            platform_public_key=bytes.fromhex(data["platform_public_key"]),
        )


class PlatformState:
    """The simulated root of trust: firmware measurements plus signing key."""

    def __init__(self, key_seed: bytes, measurements, lifecycle_state: int = LIFECYCLE_SECURED):
        self._key = Ed25519PrivateKey.from_private_bytes(key_seed)
        self.measurements = tuple(measurements)
        self.lifecycle_state = lifecycle_state

    @property
    def public_key_bytes(self) -> bytes:
        return self._key.public_key().public_bytes_raw()

    def sign(self, payload: bytes) -> bytes:
        return self._key.sign(payload)


def encode_realm_token(token: RealmToken) -> bytes:
    return codec.encode(
        {
            0: token.rim,
            1: list(token.rem),
            2: token.personalization,
            3: token.challenge,
            4: token.public_key_hash,
        }
    )


def _decode_realm_token(data: bytes) -> RealmToken:
    obj = codec.decode(data)
    try:
        token = RealmToken(
            rim=obj[0],
            rem=tuple(obj[1]),
            personalization=obj[2],
            challenge=obj[3],
            public_key_hash=obj[4],
        )
    except (KeyError, TypeError):
        raise DecodeError("realm token missing required fields") from None
    if (
        len(token.rim) != DIGEST_SIZE
        or len(token.rem) != REM_SLOTS
        or any(len(m) != DIGEST_SIZE for m in token.rem)
        or len(token.personalization) != PERSONALIZATION_SIZE
        or len(token.challenge) != CHALLENGE_SIZE
        or len(token.public_key_hash) != DIGEST_SIZE
    ):
        raise DecodeError("realm token field sizes invalid")
    return token


def platform_signed_payload(measurements, lifecycle_state: int, binding: bytes) -> bytes:
    return codec.encode({0: list(measurements), 1: lifecycle_state, 2: binding})


def encode_platform_token(token: PlatformToken) -> bytes:
    return codec.encode(
        {
            0: list(token.measurements),
            1: token.lifecycle_state,
            2: token.binding,
            3: token.signature,
        }
    )


def _decode_platform_token(data: bytes) -> PlatformToken:
    obj = codec.decode(data)
    try:
        token = PlatformToken(
            measurements=tuple(obj[0]),
            lifecycle_state=obj[1],
            binding=obj[2],
            signature=obj[3],
        )
    except (KeyError, TypeError):
        raise DecodeError("platform token missing required fields") from None
    if (
        any(len(m) != DIGEST_SIZE for m in token.measurements)
        or token.lifecycle_state not in (LIFECYCLE_SECURED, LIFECYCLE_DEBUG)
        or len(token.binding) != DIGEST_SIZE
        or len(token.signature) != 64
    ):
        raise DecodeError("platform token field sizes invalid")
    return token


def encode_report(report: AttestationReport) -> bytes:
    return codec.encode(
        {
            0: report.scheme,
            1: encode_realm_token(report.realm_token),
            2: encode_platform_token(report.platform_token),
        }
    )


def decode_report(data: bytes) -> AttestationReport:
    obj = codec.decode(data)
    try:
        scheme = obj[0]
        realm_bytes = obj[1]
        platform_bytes = obj[2]
    except (KeyError, TypeError):
        raise DecodeError("report missing required fields") from None
    if scheme != SCHEME_ED25519:
        raise DecodeError(f"unsupported signature scheme {scheme}")
    if not isinstance(realm_bytes, bytes) or not isinstance(platform_bytes, bytes):
        raise DecodeError("report token fields must be byte strings")
    return AttestationReport(
        scheme=scheme,
        realm_token=_decode_realm_token(realm_bytes),
        platform_token=_decode_platform_token(platform_bytes),
    )


def assemble_report(descriptor, challenge: bytes, platform: PlatformState) -> AttestationReport:
    """Build the two-part report for an active realm and a 64-byte challenge."""
    if len(challenge) != CHALLENGE_SIZE:
        raise ValueError("challenge must be 64 bytes")
    realm_token = RealmToken(
        rim=descriptor.rim,
        rem=tuple(descriptor.rem),
        personalization=descriptor.personalization,
        challenge=challenge,
        public_key_hash=hashlib.sha256(platform.public_key_bytes).digest(),
    )
    realm_bytes = encode_realm_token(realm_token)
    binding = hashlib.sha256(realm_bytes).digest()
    payload = platform_signed_payload(platform.measurements, platform.lifecycle_state, binding)
    platform_token = PlatformToken(
        measurements=platform.measurements,
        lifecycle_state=platform.lifecycle_state,
        binding=binding,
        signature=platform.sign(payload),
    )
    return AttestationReport(SCHEME_ED25519, realm_token, platform_token)


def verify_report(report: AttestationReport, expected_challenge: bytes | None, refs: ReferenceValues) -> Verdict:
    """Appraise a decoded report. Checks run in a fixed order and the verdict
    carries the first failure: signature, binding, challenge, rim, platform
    measurements, lifecycle state.

    ``expected_challenge=None`` skips the freshness check (offline appraisal
    of a stored report, where the verifier's nonce is unknown).
    """
    pt = report.platform_token
    payload = platform_signed_payload(pt.measurements, pt.lifecycle_state, pt.binding)
    try:
        public_key = Ed25519PublicKey.from_public_bytes(refs.platform_public_key)
        public_key.verify(pt.signature, payload)
    except (InvalidSignature, ValueError):
        return Verdict.reject(REASON_SIGNATURE)
    realm_bytes = encode_realm_token(report.realm_token)
    if hashlib.sha256(realm_bytes).digest() != pt.binding:
        return Verdict.reject(REASON_BINDING)
    if expected_challenge is not None and report.realm_token.challenge != expected_challenge:
        return Verdict.reject(REASON_CHALLENGE)
    if report.realm_token.rim != refs.expected_rim:
        return Verdict.reject(REASON_RIM)
    if pt.measurements not in refs.accepted_platform_measurements:
        return Verdict.reject(REASON_PLATFORM)
    if pt.lifecycle_state != LIFECYCLE_SECURED:
        return Verdict.reject(REASON_DEBUG)
    return Verdict.accept()


def verify_report_bytes(data: bytes, expected_challenge: bytes | None, refs: ReferenceValues) -> Verdict:
    try:
        report = decode_report(data)
    except DecodeError:
        return Verdict.reject(REASON_DECODE)
    return verify_report(report, expected_challenge, refs)
