"""The model provider: provisioning sessions and attested updates.

A session walks challenge -> report -> verify -> deliver. Challenges
come from a seeded generator and are single-use, so a replayed report
always fails freshness. Model packages leave the provider only inside
sealed frames on a session whose latest verification accepted, and an
update additionally requires the realm's measurement slot 0 to match
the extend chain over every package digest this session has delivered.
"""

import enum
from dataclasses import dataclass

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from . import channel as ch
from .attestation import ReferenceValues, verify_report_bytes
from .errors import ProtocolError
from .measure import CHALLENGE_SIZE, ZERO_DIGEST, extend
from .model import ModelPackage, encode_package
from .rng import DeterministicRng

REASON_PROTOCOL = "ProtocolError"
REASON_RUNTIME_STATE = "RuntimeStateMismatch"


@dataclass(frozen=True)
class TranscriptEntry:
    direction: str  # "provider->realm" or "realm->provider"
    msg_type: int
    tick: int


class SessionState(enum.Enum):
    AWAIT_HELLO = "await_hello"
    AWAIT_REPORT = "await_report"
    PROVISIONED = "provisioned"
    AWAIT_UPDATE_REPORT = "await_update_report"
    CLOSED = "closed"


class ModelProvider:
    def __init__(self, refs: ReferenceValues, static_key_seed: bytes, packages, rng: DeterministicRng, clock=None):
        self._refs = refs
        self._static_key = X25519PrivateKey.from_private_bytes(static_key_seed)
        self._packages = sorted(packages, key=lambda p: p.version)
        self._rng = rng.child("provider-nonces")
        self._clock = clock
        self._used_nonces: set[bytes] = set()
        self.challenge_log: list[bytes] = []
        self.sessions: list[ProviderSession] = []

    @property
    def static_public_key(self) -> bytes:
        return self._static_key.public_key().public_bytes_raw()

    @property
    def latest(self) -> ModelPackage:
        return self._packages[-1]

    def add_package(self, package: ModelPackage) -> None:
        self._packages.append(package)
        self._packages.sort(key=lambda p: p.version)

    def issue_challenge(self) -> bytes:
        """Fresh 64-byte nonce; never repeats within a provider lifetime."""
        while True:
            nonce = self._rng.bytes(CHALLENGE_SIZE)
            if nonce not in self._used_nonces:
                self._used_nonces.add(nonce)
                self.challenge_log.append(nonce)
                return nonce

    def new_session(self) -> "ProviderSession":
        session = ProviderSession(self)
        self.sessions.append(session)
        return session

    def _tick(self) -> int:
        return self._clock.tick if self._clock is not None else 0


class ProviderSession:
    def __init__(self, provider: ModelProvider):
        self._provider = provider
        self._secure: ch.SecureChannel | None = None
        self._state = SessionState.AWAIT_HELLO
        self._outstanding_nonce: bytes | None = None
        self._update_from_version: int | None = None
        self.delivered_digests: list[bytes] = []
        self.transcript: list[TranscriptEntry] = []
        self.verdicts: list = []

    @property
    def state(self) -> SessionState:
        return self._state

    @property
    def closed(self) -> bool:
        return self._state is SessionState.CLOSED

    def provider_message_count(self) -> int:
        return sum(1 for e in self.transcript if e.direction == "provider->realm")

    # -- frame plumbing ----------------------------------------------------

    def _log(self, direction: str, msg_type: int) -> None:
        self.transcript.append(TranscriptEntry(direction, msg_type, self._provider._tick()))

    def _out(self, msg_type: int, fields: dict | None = None, seal: bool = True) -> bytes:
        self._log("provider->realm", msg_type)
        body = ch.encode_message(msg_type, fields)
        if seal:
            return self._secure.seal(body)
        return body

    def _refused(self, reason: str) -> list[bytes]:
        self._state = SessionState.CLOSED
        if self._secure is None:
            return [self._out(ch.MSG_REFUSED, {1: reason}, seal=False)]
        return [self._out(ch.MSG_REFUSED, {1: reason})]

    def handle_frame(self, body: bytes) -> list[bytes]:
        if self._state is SessionState.CLOSED:
            raise ProtocolError("session is closed")
        try:
            message = ch.decode_message(body)
        except Exception:
            return self._refused(REASON_PROTOCOL)
        if self._secure is not None:
            if message.get(0) != ch.MSG_SEALED:
                return self._refused(REASON_PROTOCOL)
            try:
                message = ch.decode_message(self._secure.open(message))
            except ProtocolError:
                return self._refused(REASON_PROTOCOL)
        return self._dispatch(message)

    # -- protocol ------------------------------------------------------------

    def _dispatch(self, message: dict) -> list[bytes]:
        msg_type = message.get(0)
        self._log("realm->provider", msg_type if isinstance(msg_type, int) else -1)
        if self._state is SessionState.AWAIT_HELLO:
            if msg_type != ch.MSG_HELLO:
                return self._refused(REASON_PROTOCOL)
            return self._handle_hello(message)
        if self._state is SessionState.AWAIT_REPORT:
            if msg_type != ch.MSG_REPORT:
                return self._refused(REASON_PROTOCOL)
            return self._handle_provision_report(message)
        if self._state is SessionState.PROVISIONED:
            if msg_type != ch.MSG_UPDATE_QUERY:
                return self._refused(REASON_PROTOCOL)
            return self._handle_update_query(message)
        if self._state is SessionState.AWAIT_UPDATE_REPORT:
            if msg_type != ch.MSG_REPORT:
                return self._refused(REASON_PROTOCOL)
            return self._handle_update_report(message)
        return self._refused(REASON_PROTOCOL)

    def _handle_hello(self, message: dict) -> list[bytes]:
        ephemeral = message.get(1)
        if not isinstance(ephemeral, bytes) or len(ephemeral) != 32:
            return self._refused(REASON_PROTOCOL)
        key = ch.provider_handshake_key(self._provider._static_key, ephemeral)
        hello = self._out(ch.MSG_HELLO, {1: self._provider.static_public_key}, seal=False)
        self._secure = ch.SecureChannel(key, ch.DIR_PROVIDER, ch.DIR_CLIENT)
        self._outstanding_nonce = self._provider.issue_challenge()
        challenge = self._out(ch.MSG_CHALLENGE, {1: self._outstanding_nonce})
        self._state = SessionState.AWAIT_REPORT
        return [hello, challenge]

    def _verify(self, message: dict):
        report_bytes = message.get(1)
        if not isinstance(report_bytes, bytes):
            return None, REASON_PROTOCOL
        verdict = verify_report_bytes(report_bytes, self._outstanding_nonce, self._provider._refs)
        self._outstanding_nonce = None
        self.verdicts.append(verdict)
        if not verdict.accepted:
            return None, verdict.reason
        from .attestation import decode_report

        return decode_report(report_bytes), None

    def _handle_provision_report(self, message: dict) -> list[bytes]:
        _, failure = self._verify(message)
        if failure is not None:
            return self._refused(failure)
        package = self._provider.latest
        self.delivered_digests.append(package.digest)
        self._state = SessionState.PROVISIONED
        return [self._out(ch.MSG_PACKAGE, {1: encode_package(package)})]

    def _handle_update_query(self, message: dict) -> list[bytes]:
        version = message.get(1)
        if not isinstance(version, int):
            return self._refused(REASON_PROTOCOL)
        self._update_from_version = version
        self._outstanding_nonce = self._provider.issue_challenge()
        self._state = SessionState.AWAIT_UPDATE_REPORT
        return [self._out(ch.MSG_CHALLENGE, {1: self._outstanding_nonce})]

    def _expected_rem(self) -> bytes:
        value = ZERO_DIGEST
        for digest in self.delivered_digests:
            value = extend(value, digest)
        return value

    def _handle_update_report(self, message: dict) -> list[bytes]:
        report, failure = self._verify(message)
        if failure is not None:
            return self._refused(failure)
        if report.realm_token.rem[0] != self._expected_rem():
            return self._refused(REASON_RUNTIME_STATE)
        self._state = SessionState.PROVISIONED
        latest = self._provider.latest
        if latest.version > self._update_from_version:
            self.delivered_digests.append(latest.digest)
            return [self._out(ch.MSG_UPDATE, {1: encode_package(latest)})]
        return [self._out(ch.MSG_UP_TO_DATE)]
