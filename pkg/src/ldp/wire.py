"""Message envelopes, signing, and transports.

Every protocol message travels as a signed :class:`MessageEnvelope`. The
envelope is serialized as one newline-delimited JSON object per message
(UTF-8), with a detached Ed25519 signature over a canonical length-prefixed
encoding of the non-signature fields. Two transports are provided: an
in-memory pair for tests and a TCP client/listener for deployment. Both
enforce the same framing and size limits so they are observationally
identical to callers.

Wire fields are exactly: ``type``, ``sender_id``, ``session_id`` (nullable),
``nonce`` (32 hex chars), ``timestamp_ms`` (integer), ``body`` (object),
``signature`` (base64).
"""

from __future__ import annotations

import base64
import binascii
import json
import os
import queue
import random
import secrets
import socket
import struct
import threading
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Callable

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)

from ldp.errors import (
    ConnectionClosedError,
    MessageTooLargeError,
    SigningError,
    WireFormatError,
)

DEFAULT_MAX_MESSAGE_BYTES = 16 * 1024 * 1024
MAX_MESSAGE_BYTES_ENV = "LDP_MAX_MESSAGE_BYTES"

# Timestamps further than this from the verifier's clock are treated as
# stale by replay checks (the signature itself does not expire).
TIMESTAMP_SKEW_TOLERANCE_MS = 300_000


class MessageType(Enum):
    """Protocol message types.

    The first seven are the session lifecycle; FALLBACK_NOTICE,
    SESSION_CLOSE, and ERROR are protocol plumbing.
    """

    HELLO = "HELLO"
    CAPABILITY_MANIFEST = "CAPABILITY_MANIFEST"
    SESSION_PROPOSE = "SESSION_PROPOSE"
    SESSION_ACCEPT = "SESSION_ACCEPT"
    TASK_SUBMIT = "TASK_SUBMIT"
    TASK_UPDATE = "TASK_UPDATE"
    TASK_RESULT = "TASK_RESULT"
    FALLBACK_NOTICE = "FALLBACK_NOTICE"
    SESSION_CLOSE = "SESSION_CLOSE"
    ERROR = "ERROR"


LIFECYCLE_TYPES = (
    MessageType.HELLO,
    MessageType.CAPABILITY_MANIFEST,
    MessageType.SESSION_PROPOSE,
    MessageType.SESSION_ACCEPT,
    MessageType.TASK_SUBMIT,
    MessageType.TASK_UPDATE,
    MessageType.TASK_RESULT,
)


def now_ms() -> int:
    return int(time.time() * 1000)


def max_message_bytes() -> int:
    """Configured message size cap; env var overrides the 16 MiB default."""
    raw = os.environ.get(MAX_MESSAGE_BYTES_ENV)
    if raw is None:
        return DEFAULT_MAX_MESSAGE_BYTES
    try:
        value = int(raw)
    except ValueError as exc:
        raise ValueError(f"{MAX_MESSAGE_BYTES_ENV} must be an integer, got {raw!r}") from exc
    if value <= 0:
        raise ValueError(f"{MAX_MESSAGE_BYTES_ENV} must be positive, got {value}")
    return value


@dataclass(frozen=True)
class KeyMaterial:
    """Ed25519 key pair; verifier-side copies hold only the public half."""

    public_key: bytes
    private_key: bytes | None = None

    @classmethod
    def generate(cls, seed: int | None = None) -> "KeyMaterial":
        """Create a key pair.

        A seed derives the key deterministically so simulations are
        reproducible; without one the key comes from OS entropy.
        """
        if seed is None:
            raw = secrets.token_bytes(32)
        else:
            raw = random.Random(seed).randbytes(32)
        private = Ed25519PrivateKey.from_private_bytes(raw)
        public = private.public_key().public_bytes_raw()
        return cls(public_key=public, private_key=raw)

    def public_only(self) -> "KeyMaterial":
        return KeyMaterial(public_key=self.public_key)

    def sign(self, data: bytes) -> bytes:
        if self.private_key is None:
            raise SigningError("key material has no private half")
        try:
            private = Ed25519PrivateKey.from_private_bytes(self.private_key)
        except (ValueError, TypeError) as exc:
            raise SigningError(f"malformed private key: {exc}") from exc
        return private.sign(data)


def verify_bytes(public_key: bytes, signature: bytes, data: bytes) -> bool:
    """True iff ``signature`` over ``data`` verifies under ``public_key``."""
    try:
        key = Ed25519PublicKey.from_public_bytes(public_key)
    except (ValueError, TypeError):
        return False
    try:
        key.verify(signature, data)
        return True
    except InvalidSignature:
        return False


class NonceSource:
    """Thread-safe generator of unique 128-bit nonces (32 hex chars).

    Seeded instances produce reproducible streams for simulations;
    unseeded instances draw from OS entropy. Issued nonces are tracked so
    a source never repeats itself within its lifetime.
    """

    def __init__(self, seed: int | None = None):
        self._rng = random.Random(seed) if seed is not None else None
        self._lock = threading.Lock()
        self._issued: set[str] = set()

    def next(self) -> str:
        with self._lock:
            while True:
                if self._rng is not None:
                    nonce = f"{self._rng.getrandbits(128):032x}"
                else:
                    nonce = secrets.token_hex(16)
                if nonce not in self._issued:
                    self._issued.add(nonce)
                    return nonce


@dataclass(frozen=True)
class MessageEnvelope:
    """Immutable signed protocol message."""

    message_type: MessageType
    sender_id: str
    session_id: str | None
    nonce: str
    timestamp_ms: int
    body: dict[str, Any]
    signature: bytes = b""

    def without_signature(self) -> "MessageEnvelope":
        return replace(self, signature=b"")


def new_envelope(
    message_type: MessageType,
    sender_id: str,
    body: dict[str, Any],
    session_id: str | None = None,
    nonces: NonceSource | None = None,
    clock: Callable[[], int] = now_ms,
) -> MessageEnvelope:
    """Build an unsigned envelope with a fresh nonce and current timestamp."""
    source = nonces if nonces is not None else NonceSource()
    return MessageEnvelope(
        message_type=message_type,
        sender_id=sender_id,
        session_id=session_id,
        nonce=source.next(),
        timestamp_ms=clock(),
        body=body,
    )


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# Length prefix marking an absent (null) field in the signable encoding;
# distinguishes None from the empty string.
_NULL_FIELD = 0xFFFFFFFF


def signable_bytes(envelope: MessageEnvelope) -> bytes:
    """Canonical byte encoding of the non-signature fields.

    Fields are length-prefixed (4 bytes big-endian) in declared order so
    the signature covers an unambiguous serialization.
    """
    parts: list[bytes | None] = [
        envelope.message_type.value.encode("utf-8"),
        envelope.sender_id.encode("utf-8"),
        None if envelope.session_id is None else envelope.session_id.encode("utf-8"),
        envelope.nonce.encode("utf-8"),
        str(envelope.timestamp_ms).encode("utf-8"),
        canonical_json(envelope.body).encode("utf-8"),
    ]
    out = bytearray()
    for part in parts:
        if part is None:
            out += struct.pack(">I", _NULL_FIELD)
        else:
            out += struct.pack(">I", len(part))
            out += part
    return bytes(out)


def sign_envelope(envelope: MessageEnvelope, key: KeyMaterial) -> MessageEnvelope:
    """Return a copy of ``envelope`` with the signature field populated."""
    if envelope.signature:
        raise SigningError("envelope already carries a signature")
    return replace(envelope, signature=key.sign(signable_bytes(envelope)))


def verify_envelope(envelope: MessageEnvelope, public_key: bytes) -> bool:
    """True iff the envelope's signature matches its canonical encoding.

    Tampering and key mismatch return False rather than raising.
    """
    if not envelope.signature:
        return False
    return verify_bytes(public_key, envelope.signature, signable_bytes(envelope.without_signature()))


_NONCE_HEX_LEN = 32


def encode_envelope(envelope: MessageEnvelope) -> bytes:
    """Canonical JSON encoding (no trailing newline); same envelope, same bytes."""
    payload = {
        "type": envelope.message_type.value,
        "sender_id": envelope.sender_id,
        "session_id": envelope.session_id,
        "nonce": envelope.nonce,
        "timestamp_ms": envelope.timestamp_ms,
        "body": envelope.body,
        "signature": base64.b64encode(envelope.signature).decode("ascii"),
    }
    return canonical_json(payload).encode("utf-8")


def decode_envelope(data: bytes) -> MessageEnvelope:
    """Parse wire bytes into an envelope.

    Raises :class:`WireFormatError` naming the offending field on any
    malformed input, including truncation.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise WireFormatError(f"envelope is not valid UTF-8: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise WireFormatError(f"envelope is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise WireFormatError("envelope must be a JSON object")

    def require(name: str) -> Any:
        if name not in raw:
            raise WireFormatError(f"missing field {name!r}", field=name)
        return raw[name]

    type_name = require("type")
    try:
        message_type = MessageType(type_name)
    except ValueError as exc:
        raise WireFormatError(f"unknown message type {type_name!r}", field="type") from exc

    sender_id = require("sender_id")
    if not isinstance(sender_id, str) or not sender_id:
        raise WireFormatError("sender_id must be a non-empty string", field="sender_id")

    session_id = require("session_id")
    if session_id is not None and not isinstance(session_id, str):
        raise WireFormatError("session_id must be a string or null", field="session_id")

    nonce = require("nonce")
    if not isinstance(nonce, str) or len(nonce) != _NONCE_HEX_LEN:
        raise WireFormatError(f"nonce must be {_NONCE_HEX_LEN} hex chars", field="nonce")
    try:
        int(nonce, 16)
    except ValueError as exc:
        raise WireFormatError("nonce must be hexadecimal", field="nonce") from exc

    timestamp_ms = require("timestamp_ms")
    if not isinstance(timestamp_ms, int) or isinstance(timestamp_ms, bool):
        raise WireFormatError("timestamp_ms must be an integer", field="timestamp_ms")

    body = require("body")
    if not isinstance(body, dict):
        raise WireFormatError("body must be a JSON object", field="body")

    signature_b64 = require("signature")
    if not isinstance(signature_b64, str):
        raise WireFormatError("signature must be a base64 string", field="signature")
    try:
        signature = base64.b64decode(signature_b64, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise WireFormatError("signature is not valid base64", field="signature") from exc

    return MessageEnvelope(
        message_type=message_type,
        sender_id=sender_id,
        session_id=session_id,
        nonce=nonce,
        timestamp_ms=timestamp_ms,
        body=body,
        signature=signature,
    )


class Connection:
    """Transport interface: FIFO delivery of envelopes per connection."""

    def send(self, envelope: MessageEnvelope) -> None:
        raise NotImplementedError

    def recv(self) -> MessageEnvelope:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError

    def __enter__(self) -> "Connection":
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()


_CLOSED = object()


class InMemoryConnection(Connection):
    """One endpoint of an in-process connection pair.

    Safe for one sender thread and one receiver thread at a time.
    Envelopes pass through the byte encoding so framing and size behavior
    match the TCP transport.
    """

    def __init__(
        self,
        outbox: "queue.SimpleQueue[object]",
        inbox: "queue.SimpleQueue[object]",
        max_bytes: int,
    ):
        self._outbox = outbox
        self._inbox = inbox
        self._max_bytes = max_bytes
        self._closed = False

    def send(self, envelope: MessageEnvelope) -> None:
        if self._closed:
            raise ConnectionClosedError("connection is closed")
        data = encode_envelope(envelope)
        if len(data) > self._max_bytes:
            raise MessageTooLargeError(
                f"encoded envelope is {len(data)} bytes, cap is {self._max_bytes}"
            )
        self._outbox.put(data)

    def recv(self) -> MessageEnvelope:
        if self._closed:
            raise ConnectionClosedError("connection is closed")
        item = self._inbox.get()
        if item is _CLOSED:
            # Leave the marker for any subsequent recv.
            self._inbox.put(_CLOSED)
            raise ConnectionClosedError("peer closed the connection")
        assert isinstance(item, bytes)
        if len(item) > self._max_bytes:
            raise MessageTooLargeError(
                f"received envelope is {len(item)} bytes, cap is {self._max_bytes}"
            )
        return decode_envelope(item)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._outbox.put(_CLOSED)


def memory_pair(max_bytes: int | None = None) -> tuple[InMemoryConnection, InMemoryConnection]:
    """Create a connected in-memory transport pair (client end, server end)."""
    cap = max_bytes if max_bytes is not None else max_message_bytes()
    a_to_b: queue.SimpleQueue[object] = queue.SimpleQueue()
    b_to_a: queue.SimpleQueue[object] = queue.SimpleQueue()
    return (
        InMemoryConnection(outbox=a_to_b, inbox=b_to_a, max_bytes=cap),
        InMemoryConnection(outbox=b_to_a, inbox=a_to_b, max_bytes=cap),
    )


class TcpConnection(Connection):
    """Newline-delimited JSON envelopes over a TCP socket."""

    def __init__(self, sock: socket.socket, max_bytes: int | None = None):
        self._sock = sock
        self._rfile = sock.makefile("rb")
        self._max_bytes = max_bytes if max_bytes is not None else max_message_bytes()
        self._closed = False

    def send(self, envelope: MessageEnvelope) -> None:
        if self._closed:
            raise ConnectionClosedError("connection is closed")
        data = encode_envelope(envelope)
        if len(data) > self._max_bytes:
            raise MessageTooLargeError(
                f"encoded envelope is {len(data)} bytes, cap is {self._max_bytes}"
            )
        try:
            self._sock.sendall(data + b"\n")
        except OSError as exc:
            raise ConnectionClosedError(f"send failed: {exc}") from exc

    def recv(self) -> MessageEnvelope:
        if self._closed:
            raise ConnectionClosedError("connection is closed")
        try:
            line = self._rfile.readline(self._max_bytes + 2)
        except OSError as exc:
            raise ConnectionClosedError(f"recv failed: {exc}") from exc
        if not line:
            raise ConnectionClosedError("peer closed the connection")
        if not line.endswith(b"\n"):
            if len(line) > self._max_bytes:
                raise MessageTooLargeError(
                    f"received frame exceeds the {self._max_bytes} byte cap"
                )
            raise WireFormatError("connection closed mid-frame (truncated envelope)")
        return decode_envelope(line[:-1])

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            try:
                self._rfile.close()
            except OSError:
                pass
            try:
                self._sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self._sock.close()


def tcp_connect(host: str, port: int, timeout: float | None = None) -> TcpConnection:
    sock = socket.create_connection((host, port), timeout=timeout)
    return TcpConnection(sock)


class TcpListener:
    """Accept loop wrapper yielding :class:`TcpConnection` per client."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, backlog: int = 16):
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(backlog)
        self._closed = False

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def accept(self) -> TcpConnection:
        if self._closed:
            raise ConnectionClosedError("listener is closed")
        try:
            client, _ = self._sock.accept()
        except OSError as exc:
            raise ConnectionClosedError(f"accept failed: {exc}") from exc
        return TcpConnection(client)

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self._sock.close()
