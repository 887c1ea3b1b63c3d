"""The program running inside the realm.

On its first entry it provisions itself: it opens the authenticated
channel to the provider using the public key pinned in its image,
answers the attestation challenge, receives the sealed model package,
verifies the package digest, extends runtime measurement slot 0 with
the model digest, and mirrors the weight encoding into realm-owned
storage pages. After announcing readiness it serves inference requests
read from the normal-world exchange region, enforcing the delivered
usage policy before every inference, and asks the hypervisor for
termination once the policy is exhausted.
"""

import struct
from dataclasses import dataclass

from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey

from . import channel as ch
from . import model as mdl
from .errors import IntegrityError, PolicyExhausted, ProtocolError, StateError
from .granules import GRANULE_SIZE
from .rmm import ExitKind, ExitReason

MAGIC = b"\x47\x54"
REC_INPUT = 0
REC_OUTPUT = 1
HEADER_SIZE = 13  # magic(2) type(1) request-id(8) payload-length(2)

POLICY_CONTINUE = "Continue"
REASON_INFERENCE_LIMIT = "InferenceLimit"
REASON_EXPIRED = "Expired"


def encode_record(record_type: int, request_id: int, payload: bytes) -> bytes:
    header = MAGIC + bytes([record_type]) + struct.pack("<Q", request_id) + struct.pack("<H", len(payload))
    return header + payload + b"\x00"


def encode_input_record(request_id: int, values) -> bytes:
    payload = struct.pack(f"<{len(values)}i", *values)
    return encode_record(REC_INPUT, request_id, payload)


def encode_output_record(request_id: int, class_index: int) -> bytes:
    return encode_record(REC_OUTPUT, request_id, struct.pack("<i", class_index))


@dataclass(frozen=True)
class ExchangeRecord:
    record_type: int
    request_id: int
    payload: bytes
    consumed: bool
    size: int  # total encoded length including the consumed flag


def parse_record(buf: bytes) -> ExchangeRecord | None:
    """Decode one record from the start of a slot; None if malformed."""
    if len(buf) < HEADER_SIZE + 1 or buf[:2] != MAGIC:
        return None
    record_type = buf[2]
    if record_type not in (REC_INPUT, REC_OUTPUT):
        return None
    request_id = struct.unpack_from("<Q", buf, 3)[0]
    payload_len = struct.unpack_from("<H", buf, 11)[0]
    end = HEADER_SIZE + payload_len
    if end + 1 > len(buf):
        return None
    flag = buf[end]
    if flag not in (0, 1):
        return None
    return ExchangeRecord(record_type, request_id, buf[HEADER_SIZE:end], flag == 1, end + 1)


def decode_input_payload(payload: bytes) -> list | None:
    if len(payload) == 0 or len(payload) % 4:
        return None
    return list(struct.unpack(f"<{len(payload) // 4}i", payload))


CONSUMED_FLAG_OFFSET = HEADER_SIZE  # plus payload length, computed per record


@dataclass
class RuntimeConfig:
    pinned_provider_key: bytes = b""
    channel_key_seed: bytes = b""
    update_on_idle: bool = False


class RealmRuntime:
    """Steps once per realm entry; all memory access goes through its view."""

    def __init__(self, memory, exchange_granules, config: RuntimeConfig, provider_channel=None, model_store_granules=(), ledger=None):
        self._memory = memory
        self._exchange = list(exchange_granules)
        self._config = config
        self._channel = provider_channel
        self._store = list(model_store_granules)
        self._ledger = ledger
        self._model: mdl.ModelPackage | None = None
        self._secure: ch.SecureChannel | None = None
        self._provisioned = False
        self._announced = False
        self._update_checked = False
        self.inference_count = 0
        self.malformed_records = 0

    # -- model ------------------------------------------------------------

    def load_model(self, package: mdl.ModelPackage, rsi=None) -> None:
        if not package.verify_digest():
            raise IntegrityError("model package digest mismatch")
        self._model = package
        self.inference_count = 0
        if rsi is not None:
            rsi.measurement_extend(0, package.digest)
        self._store_weights(package)

    def _store_weights(self, package: mdl.ModelPackage) -> None:
        encoded = mdl.encode_weights(package.n_classes, package.n_features, package.weights, package.bias)
        for i, granule_id in enumerate(self._store):
            chunk = encoded[i * GRANULE_SIZE : (i + 1) * GRANULE_SIZE]
            if not chunk:
                break
            self._memory.write(granule_id, 0, chunk)

    def infer(self, values) -> int:
        if self._model is None:
            raise StateError("no model loaded")
        if self._policy_state(None) == REASON_INFERENCE_LIMIT:
            raise PolicyExhausted("inference limit reached")
        result = mdl.classify(self._model.weights, self._model.bias, values)
        self.inference_count += 1
        if self._ledger is not None:
            self._ledger.record("inference_compute", actor="realm")
        return result

    # -- policy -----------------------------------------------------------

    def _policy_state(self, now) -> str:
        policy = self._model.policy
        if policy.max_inferences != mdl.UNLIMITED and self.inference_count >= policy.max_inferences:
            return REASON_INFERENCE_LIMIT
        if now is not None and policy.valid_until != mdl.UNLIMITED and now > policy.valid_until:
            return REASON_EXPIRED
        return POLICY_CONTINUE

    def enforce_policy(self, now) -> str:
        """Continue, or the termination reason; checked before every inference."""
        if self._model is None:
            raise StateError("no model loaded")
        return self._policy_state(now)

    # -- exchange ---------------------------------------------------------

    def poll_exchange(self):
        """Unconsumed inputs in arrival order; marks them consumed."""
        found = []
        for granule_id in self._exchange:
            buf = self._memory.read(granule_id, 0, GRANULE_SIZE)
            if buf[0] == 0:
                continue  # empty slot
            record = parse_record(buf)
            if record is None:
                self.malformed_records += 1
                continue
            if record.record_type != REC_INPUT or record.consumed:
                continue
            values = decode_input_payload(record.payload)
            if values is None:
                self.malformed_records += 1
                continue
            self._memory.write(granule_id, HEADER_SIZE + len(record.payload), b"\x01")
            found.append((granule_id, record.request_id, values))
        found.sort(key=lambda item: item[1])
        return found

    def _write_output(self, granule_id: int, request_id: int, class_index: int) -> None:
        self._memory.write(granule_id, 0, encode_output_record(request_id, class_index))

    # -- provisioning and updates ------------------------------------------

    def _open_session(self):
        if self._secure is not None:
            return
        ephemeral = X25519PrivateKey.from_private_bytes(self._config.channel_key_seed)
        hello = ch.encode_message(ch.MSG_HELLO, {1: ephemeral.public_key().public_bytes_raw()})
        self._channel.send_frame(hello)
        reply = ch.decode_message(self._channel.recv_frame())
        if reply.get(0) != ch.MSG_HELLO:
            raise ProtocolError("provider did not answer the handshake")
        provider_key = reply.get(1)
        if provider_key != self._config.pinned_provider_key:
            raise ProtocolError("provider key does not match the pinned key")
        key = ch.client_handshake_key(ephemeral, provider_key)
        self._secure = ch.SecureChannel(key, ch.DIR_CLIENT, ch.DIR_PROVIDER)

    def _recv_sealed(self) -> dict:
        return ch.decode_message(self._secure.open(ch.decode_message(self._channel.recv_frame())))

    def _send_sealed(self, msg_type: int, fields: dict | None = None) -> None:
        self._channel.send_frame(self._secure.seal(ch.encode_message(msg_type, fields)))

    def _answer_challenge(self, rsi, message: dict) -> None:
        if message.get(0) != ch.MSG_CHALLENGE:
            raise ProtocolError("expected a challenge")
        report = rsi.attestation_token(message[1])
        from .attestation import encode_report

        self._send_sealed(ch.MSG_REPORT, {1: encode_report(report)})

    def _provision(self, rsi) -> None:
        if self._channel is None:
            raise StateError("runtime has no provider channel")
        self._open_session()
        self._answer_challenge(rsi, self._recv_sealed())
        reply = self._recv_sealed()
        if reply.get(0) == ch.MSG_REFUSED:
            raise ProtocolError(f"provisioning refused: {reply.get(1)}")
        if reply.get(0) != ch.MSG_PACKAGE:
            raise ProtocolError("expected the model package")
        self.load_model(mdl.decode_package(reply[1]), rsi)
        self._provisioned = True

    def _check_update(self, rsi) -> bytes:
        self._send_sealed(ch.MSG_UPDATE_QUERY, {1: self._model.version})
        self._answer_challenge(rsi, self._recv_sealed())
        reply = self._recv_sealed()
        if reply.get(0) == ch.MSG_UPDATE:
            self.load_model(mdl.decode_package(reply[1]), rsi)
            return b"update:v%d" % self._model.version
        if reply.get(0) == ch.MSG_UP_TO_DATE:
            return b"update:uptodate"
        if reply.get(0) == ch.MSG_REFUSED:
            return b"update:refused:" + str(reply.get(1)).encode()
        raise ProtocolError("unexpected reply to update query")

    # -- entry point --------------------------------------------------------

    def step(self, rsi, now: int) -> ExitReason:
        if self._channel is not None and not self._provisioned:
            self._provision(rsi)
            self._announced = True
            return rsi.host_call(b"ready")
        if self._model is None:
            raise StateError("no model loaded")
        state = self.enforce_policy(now)
        if state != POLICY_CONTINUE:
            return rsi.host_call(b"terminate:" + state.encode())
        inputs = self.poll_exchange()
        if not inputs:
            if self._config.update_on_idle and self._provisioned and not self._update_checked:
                self._update_checked = True
                return rsi.host_call(self._check_update(rsi))
            return ExitReason(ExitKind.YIELD)
        for granule_id, request_id, values in inputs:
            state = self.enforce_policy(now)
            if state != POLICY_CONTINUE:
                return rsi.host_call(b"terminate:" + state.encode())
            class_index = self.infer(values)
            self._write_output(granule_id, request_id, class_index)
        return ExitReason(ExitKind.YIELD)
