"""Authenticated channel between realm and provider.

Stands in for the TLS link: the provider's static public key is pinned
inside the realm image, the client sends an ephemeral public key in a
plaintext Hello, and both sides derive one AES-GCM session key. Every
later message travels inside a sealed frame whose nonce is a direction
tag plus a send counter, so the byte stream is identical whether frames
move through the in-process pipe or a local TCP socket.

Frame format: 4-byte big-endian length, then a canonical CBOR body.
"""

import socket
import struct
import threading

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.hashes import SHA256
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from . import codec
from .errors import ProtocolError

MSG_HELLO = 0
MSG_CHALLENGE = 1
MSG_REPORT = 2
MSG_PACKAGE = 3
MSG_REFUSED = 4
MSG_UPDATE_QUERY = 5
MSG_UPDATE = 6
MSG_UP_TO_DATE = 7
MSG_SEALED = 8

DIR_CLIENT = 1
DIR_PROVIDER = 2

MAX_FRAME = 1 << 24


def encode_message(msg_type: int, fields: dict | None = None) -> bytes:
    body = {0: msg_type}
    if fields:
        body.update(fields)
    return codec.encode(body)


def decode_message(body: bytes) -> dict:
    obj = codec.decode(body)
    if not isinstance(obj, dict) or 0 not in obj:
        raise ProtocolError("frame body is not a message map")
    return obj


def derive_session_key(shared_secret: bytes) -> bytes:
    return HKDF(
        algorithm=SHA256(), length=32, salt=None, info=b"realmsim channel v1"
    ).derive(shared_secret)


class SecureChannel:
    """Seals and opens messages under the session key for one direction pair."""

    def __init__(self, key: bytes, send_dir: int, recv_dir: int):
        self._aead = AESGCM(key)
        self._send_dir = send_dir
        self._recv_dir = recv_dir
        self._send_seq = 0
        self._recv_seq = 0

    @staticmethod
    def _nonce(direction: int, seq: int) -> bytes:
        return struct.pack(">IQ", direction, seq)

    def seal(self, plaintext: bytes) -> bytes:
        seq = self._send_seq
        self._send_seq += 1
        ct = self._aead.encrypt(self._nonce(self._send_dir, seq), plaintext, b"")
        return encode_message(MSG_SEALED, {1: seq, 2: ct})

    def open(self, message: dict) -> bytes:
        if message.get(0) != MSG_SEALED:
            raise ProtocolError("expected a sealed frame")
        seq = message.get(1)
        ct = message.get(2)
        if seq != self._recv_seq or not isinstance(ct, bytes):
            raise ProtocolError("sealed frame out of sequence")
        self._recv_seq += 1
        try:
            return self._aead.decrypt(self._nonce(self._recv_dir, seq), ct, b"")
        except InvalidTag:
            raise ProtocolError("sealed frame failed authentication") from None


def client_handshake_key(ephemeral_private: X25519PrivateKey, provider_public: bytes) -> bytes:
    shared = ephemeral_private.exchange(X25519PublicKey.from_public_bytes(provider_public))
    return derive_session_key(shared)


def provider_handshake_key(static_private: X25519PrivateKey, ephemeral_public: bytes) -> bytes:
    shared = static_private.exchange(X25519PublicKey.from_public_bytes(ephemeral_public))
    return derive_session_key(shared)


def pack_frame(body: bytes) -> bytes:
    return struct.pack(">I", len(body)) + body


class ClientChannel:
    """Client-side frame interface; concrete transports implement _exchange."""

    def send_frame(self, body: bytes) -> None:
        raise NotImplementedError

    def recv_frame(self) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class InProcessChannel(ClientChannel):
    """Direct function-call transport to a provider session.

    Frames still pass through pack/unpack so the bytes on this path are
    identical to the TCP path; ``wire_log`` captures them for inspection.
    """

    def __init__(self, session):
        self._session = session
        self._pending = []
        self.wire_log: list[tuple[str, bytes]] = []

    def send_frame(self, body: bytes) -> None:
        self.wire_log.append(("client->provider", pack_frame(body)))
        for response in self._session.handle_frame(body):
            self.wire_log.append(("provider->client", pack_frame(response)))
            self._pending.append(response)

    def recv_frame(self) -> bytes:
        if not self._pending:
            raise ProtocolError("no response pending from provider")
        return self._pending.pop(0)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ProtocolError("connection closed mid-frame")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def recv_frame_from_socket(sock: socket.socket) -> bytes:
    header = _recv_exact(sock, 4)
    length = struct.unpack(">I", header)[0]
    if length > MAX_FRAME:
        raise ProtocolError(f"frame of {length} bytes exceeds maximum")
    return _recv_exact(sock, length)


class TcpChannel(ClientChannel):
    def __init__(self, host: str, port: int):
        self._sock = socket.create_connection((host, port))
        self._pending = []

    def send_frame(self, body: bytes) -> None:
        self._sock.sendall(pack_frame(body))
        count = struct.unpack(">I", _recv_exact(self._sock, 4))[0]
        for _ in range(count):
            self._pending.append(recv_frame_from_socket(self._sock))

    def recv_frame(self) -> bytes:
        if not self._pending:
            raise ProtocolError("no response pending from provider")
        return self._pending.pop(0)

    def close(self) -> None:
        self._sock.close()


class TcpProviderServer:
    """Serves provider sessions over a local socket, one connection at a time.

    Each inbound frame is answered with a 4-byte response count followed by
    that many frames, keeping the request/response pairing identical to the
    in-process transport.
    """

    def __init__(self, provider, host: str = "127.0.0.1"):
        self._provider = provider
        self._listener = socket.create_server((host, 0))
        self.host, self.port = self._listener.getsockname()
        self._thread = threading.Thread(target=self._serve, daemon=True)
        self._stopping = False

    def start(self) -> "TcpProviderServer":
        self._thread.start()
        return self

    def _serve(self) -> None:
        while not self._stopping:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            with conn:
                session = self._provider.new_session()
                try:
                    while True:
                        body = recv_frame_from_socket(conn)
                        responses = session.handle_frame(body)
                        conn.sendall(struct.pack(">I", len(responses)))
                        for response in responses:
                            conn.sendall(pack_frame(response))
                except ProtocolError:
                    continue

    def stop(self) -> None:
        self._stopping = True
        self._listener.close()
        self._thread.join(timeout=2)
