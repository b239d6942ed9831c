"""Governed sessions: negotiated, persistent delegation contexts.

A session is established by a four-message handshake (HELLO,
CAPABILITY_MANIFEST, SESSION_PROPOSE, SESSION_ACCEPT) and then carries
task exchanges without re-sending prior context. The accepted payload
mode is the richest mode both sides support, capped at what the caller
proposed; the callee may lower the mode but never the audit level.
Budgets are metered with the payload token model on both requests and
responses. A process-wide cache keyed by (endpoint, config fingerprint)
reuses live sessions and evicts closed, failed, or idle ones.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from ldp.errors import (
    BudgetExceededError,
    ConnectionClosedError,
    ModeViolationError,
    NegotiationError,
    PolicyRejectionError,
    ProtocolViolationError,
    TaskFailedError,
    ValidationError,
)
from ldp.identity import DelegateIdentityCard, card_to_dict
from ldp.payload import (
    ENCODABLE_MODES,
    EncodedPayload,
    ModeSet,
    PayloadMode,
    encode_mode0,
    estimate_tokens,
    negotiate_mode,
)
from ldp.provenance import ProvenanceRecord, record_from_dict
from ldp.wire import (
    Connection,
    KeyMaterial,
    MessageEnvelope,
    MessageType,
    NonceSource,
    new_envelope,
    now_ms,
    sign_envelope,
    verify_envelope,
)

AUDIT_LEVELS = ("none", "basic", "full")

SESSION_IDLE_SECS_ENV = "LDP_SESSION_IDLE_SECS"
DEFAULT_SESSION_IDLE_SECS = 300

#: Modes a client can actually encode; used as the default caller mode set.
DEFAULT_CALLER_MODES = ModeSet(frozenset(ENCODABLE_MODES))


class SessionState(Enum):
    INIT = "init"
    HELLO_SENT = "hello_sent"
    MANIFEST_RECEIVED = "manifest_received"
    PROPOSED = "proposed"
    ACTIVE = "active"
    CLOSED = "closed"
    FAILED = "failed"


@dataclass(frozen=True)
class SessionConfig:
    """Parameters proposed by the caller and confirmed (or adjusted) by the callee."""

    payload_mode: PayloadMode
    latency_target_ms: int | None = None
    cost_budget_tokens: int | None = None
    privacy_constraints: tuple[str, ...] = ()
    audit_level: str = "basic"

    def __post_init__(self) -> None:
        if self.audit_level not in AUDIT_LEVELS:
            raise ValidationError(f"audit_level must be one of {'/'.join(AUDIT_LEVELS)}")
        if self.latency_target_ms is not None and self.latency_target_ms <= 0:
            raise ValidationError("latency_target_ms must be positive when set")
        if self.cost_budget_tokens is not None and self.cost_budget_tokens <= 0:
            raise ValidationError("cost_budget_tokens must be positive when set")

    def to_dict(self) -> dict[str, Any]:
        return {
            "payload_mode": int(self.payload_mode),
            "latency_target_ms": self.latency_target_ms,
            "cost_budget_tokens": self.cost_budget_tokens,
            "privacy_constraints": list(self.privacy_constraints),
            "audit_level": self.audit_level,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SessionConfig":
        try:
            return cls(
                payload_mode=PayloadMode(data["payload_mode"]),
                latency_target_ms=data.get("latency_target_ms"),
                cost_budget_tokens=data.get("cost_budget_tokens"),
                privacy_constraints=tuple(data.get("privacy_constraints", ())),
                audit_level=data.get("audit_level", "basic"),
            )
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"malformed session config: {exc}") from exc


def config_fingerprint(config: SessionConfig) -> str:
    """Canonical hash of a config; equal configs fingerprint identically."""
    import json

    canonical = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SessionKey:
    endpoint: str
    config_fingerprint: str


@dataclass
class Round:
    request_bytes: bytes
    response_bytes: bytes
    request_tokens: int
    response_tokens: int


@dataclass
class SessionContext:
    """Accumulated per-session history and budget state."""

    session_id: str
    cost_budget_tokens: int | None = None
    rounds: list[Round] = field(default_factory=list)
    cumulative_tokens: int = 0

    @property
    def remaining_budget(self) -> int | None:
        if self.cost_budget_tokens is None:
            return None
        return max(0, self.cost_budget_tokens - self.cumulative_tokens)

    def append_round(self, round_: Round) -> None:
        self.rounds.append(round_)
        self.cumulative_tokens += round_.request_tokens + round_.response_tokens


@dataclass(frozen=True)
class TaskResult:
    """Decoded TASK_RESULT: output content plus provenance and metadata."""

    content: str
    mode: PayloadMode
    provenance: ProvenanceRecord
    simulated_latency_ms: int
    fallback_notices: tuple[str, ...] = ()


class ClientSession:
    """Caller side of one governed session over a connection.

    Single-threaded: one in-flight task at a time.
    """

    def __init__(
        self,
        conn: Connection,
        caller_card: DelegateIdentityCard,
        key: KeyMaterial,
        caller_modes: ModeSet = DEFAULT_CALLER_MODES,
        nonces: NonceSource | None = None,
        clock: Callable[[], int] = now_ms,
    ):
        self._conn = conn
        self._card = caller_card
        self._key = key
        self._modes = caller_modes
        self._nonces = nonces if nonces is not None else NonceSource()
        self._clock = clock
        self._peer_public_key: bytes | None = None
        self.state = SessionState.INIT
        self.config: SessionConfig | None = None
        self.context: SessionContext | None = None
        self.last_used = time.monotonic()

    # -- wire helpers --------------------------------------------------------

    def _send(self, message_type: MessageType, body: dict[str, Any]) -> None:
        envelope = new_envelope(
            message_type,
            sender_id=self._card.delegate_id,
            body=body,
            session_id=self.context.session_id if self.context else None,
            nonces=self._nonces,
            clock=self._clock,
        )
        self._conn.send(sign_envelope(envelope, self._key))

    def _recv(self) -> MessageEnvelope:
        envelope = self._conn.recv()
        if self._peer_public_key is not None and not verify_envelope(
            envelope, self._peer_public_key
        ):
            self.state = SessionState.FAILED
            raise ProtocolViolationError("peer envelope failed signature verification")
        if envelope.message_type is MessageType.ERROR:
            reason = envelope.body.get("reason", "unspecified error")
            mechanism = envelope.body.get("mechanism")
            self.state = SessionState.FAILED
            if mechanism:
                raise PolicyRejectionError(reason, mechanism=mechanism)
            raise TaskFailedError(reason)
        return envelope

    def _expect(self, message_type: MessageType) -> MessageEnvelope:
        envelope = self._recv()
        if envelope.message_type is not message_type:
            self.state = SessionState.FAILED
            raise ProtocolViolationError(
                f"expected {message_type.value}, got {envelope.message_type.value}"
            )
        return envelope

    # -- lifecycle -----------------------------------------------------------

    def handshake(self, proposal: SessionConfig) -> SessionConfig:
        """Run HELLO / CAPABILITY_MANIFEST / SESSION_PROPOSE / SESSION_ACCEPT.

        Returns the accepted config; the session is then ACTIVE.
        """
        if self.state is not SessionState.INIT:
            raise ProtocolViolationError(f"handshake from state {self.state.value}")

        self._send(
            MessageType.HELLO,
            {"card": card_to_dict(self._card), "supported_modes": self._modes.ordinals()},
        )
        self.state = SessionState.HELLO_SENT

        manifest = self._expect(MessageType.CAPABILITY_MANIFEST)
        raw_modes = manifest.body.get("supported_modes", [])
        try:
            callee_modes = ModeSet.of(*raw_modes)
        except (ValidationError, ValueError) as exc:
            self.state = SessionState.FAILED
            raise ProtocolViolationError(
                f"manifest mode set is invalid (must include mode 0): {raw_modes}"
            ) from exc
        peer_key_hex = manifest.body.get("public_key")
        if isinstance(peer_key_hex, str):
            self._peer_public_key = bytes.fromhex(peer_key_hex)
        self.state = SessionState.MANIFEST_RECEIVED

        self._send(MessageType.SESSION_PROPOSE, proposal.to_dict())
        self.state = SessionState.PROPOSED

        accept = self._expect(MessageType.SESSION_ACCEPT)
        accepted = SessionConfig.from_dict(accept.body.get("config", {}))
        session_id = accept.body.get("session_id")
        if not isinstance(session_id, str) or not session_id:
            self.state = SessionState.FAILED
            raise ProtocolViolationError("SESSION_ACCEPT carried no session_id")

        expected_mode = min(proposal.payload_mode, negotiate_mode(self._modes, callee_modes))
        if accepted.payload_mode > expected_mode:
            self.state = SessionState.FAILED
            raise NegotiationError(
                f"callee accepted mode {accepted.payload_mode.name} above the "
                f"negotiated cap {expected_mode.name}"
            )
        if accepted.audit_level != proposal.audit_level:
            self.state = SessionState.FAILED
            raise NegotiationError("callee may not adjust the audit level")

        self.config = accepted
        self.context = SessionContext(
            session_id=session_id, cost_budget_tokens=accepted.cost_budget_tokens
        )
        self.state = SessionState.ACTIVE
        self.last_used = time.monotonic()
        return accepted

    def submit_task(self, payload: EncodedPayload, skill: str | None = None) -> TaskResult:
        """Send one task and return its result.

        Walks the fallback chain when the delegate sends FALLBACK_NOTICE,
        re-encoding the task at the suggested lower mode.
        """
        if self.state is not SessionState.ACTIVE:
            raise ProtocolViolationError(f"submit_task in state {self.state.value}")
        assert self.config is not None and self.context is not None
        if payload.mode > self.config.payload_mode:
            raise ModeViolationError(
                f"payload mode {payload.mode.name} exceeds session mode "
                f"{self.config.payload_mode.name}"
            )
        if (
            self.context.remaining_budget is not None
            and payload.token_estimate > self.context.remaining_budget
        ):
            raise BudgetExceededError(
                f"task needs ~{payload.token_estimate} tokens, "
                f"{self.context.remaining_budget} remaining"
            )

        current = payload
        request_bytes = payload.data
        request_tokens = 0
        notices: list[str] = []
        self._send_task(current, skill)
        request_tokens += current.token_estimate

        while True:
            envelope = self._recv()
            if envelope.message_type is MessageType.TASK_UPDATE:
                continue
            if envelope.message_type is MessageType.FALLBACK_NOTICE:
                to_mode = PayloadMode(envelope.body.get("to_mode", 0))
                notices.append(envelope.body.get("failure", "unknown"))
                current = self._downgrade(current, to_mode)
                self._send_task(current, skill)
                request_tokens += current.token_estimate
                continue
            if envelope.message_type is MessageType.TASK_RESULT:
                result = self._parse_result(envelope, notices)
                response_tokens = estimate_tokens(result.content)
                self.context.append_round(
                    Round(
                        request_bytes=request_bytes,
                        response_bytes=result.content.encode("utf-8"),
                        request_tokens=request_tokens,
                        response_tokens=response_tokens,
                    )
                )
                self.last_used = time.monotonic()
                return result
            self.state = SessionState.FAILED
            raise ProtocolViolationError(
                f"unexpected {envelope.message_type.value} during task exchange"
            )

    def _send_task(self, payload: EncodedPayload, skill: str | None) -> None:
        body: dict[str, Any] = {"mode": int(payload.mode), "content": payload.text()}
        if skill is not None:
            body["skill"] = skill
        self._send(MessageType.TASK_SUBMIT, body)

    def _downgrade(self, payload: EncodedPayload, to_mode: PayloadMode) -> EncodedPayload:
        if to_mode == payload.mode:
            raise TaskFailedError("fallback notice did not lower the payload mode")
        # Downgrades re-encode from the retained plain-text form; only
        # TEXT is guaranteed encodable below SEMANTIC_FRAME.
        return encode_mode0(payload.source_text or payload.text())

    def _parse_result(self, envelope: MessageEnvelope, notices: list[str]) -> TaskResult:
        body = envelope.body
        provenance_raw = body.get("provenance")
        if not isinstance(provenance_raw, dict):
            self.state = SessionState.FAILED
            raise ProtocolViolationError("TASK_RESULT lacks a provenance record")
        return TaskResult(
            content=body.get("content", ""),
            mode=PayloadMode(body.get("mode", 0)),
            provenance=record_from_dict(provenance_raw),
            simulated_latency_ms=int(body.get("simulated_latency_ms", 0)),
            fallback_notices=tuple(notices),
        )

    def close(self) -> None:
        """Tear the session down; safe to call repeatedly."""
        if self.state is SessionState.CLOSED:
            return
        if self.state is SessionState.ACTIVE:
            try:
                self._send(MessageType.SESSION_CLOSE, {})
            except ConnectionClosedError:
                pass
        self.state = SessionState.CLOSED
        try:
            self._conn.close()
        except ConnectionClosedError:
            pass


def run_handshake(
    conn: Connection,
    caller_card: DelegateIdentityCard,
    proposal: SessionConfig,
    key: KeyMaterial | None = None,
    caller_modes: ModeSet = DEFAULT_CALLER_MODES,
    nonces: NonceSource | None = None,
    clock: Callable[[], int] = now_ms,
) -> ClientSession:
    """Establish a session over an open connection and return it ACTIVE."""
    signing_key = key if key is not None else KeyMaterial.generate()
    session = ClientSession(
        conn,
        caller_card,
        key=signing_key,
        caller_modes=caller_modes,
        nonces=nonces,
        clock=clock,
    )
    session.handshake(proposal)
    return session


def _idle_limit_secs() -> float:
    raw = os.environ.get(SESSION_IDLE_SECS_ENV)
    if raw is None:
        return DEFAULT_SESSION_IDLE_SECS
    try:
        value = float(raw)
    except ValueError as exc:
        raise ValueError(f"{SESSION_IDLE_SECS_ENV} must be a number, got {raw!r}") from exc
    if value <= 0:
        raise ValueError(f"{SESSION_IDLE_SECS_ENV} must be positive")
    return value


class SessionCache:
    """Live-session reuse keyed by (endpoint, config fingerprint).

    Safe for concurrent ``get_or_create`` calls. Handshakes run outside
    the lock; if two callers race on the same key, the first registered
    session wins and the loser is closed.
    """

    def __init__(
        self,
        connect: Callable[[str], Connection],
        caller_card: DelegateIdentityCard,
        key: KeyMaterial | None = None,
        caller_modes: ModeSet = DEFAULT_CALLER_MODES,
        idle_secs: float | None = None,
    ):
        self._connect = connect
        self._card = caller_card
        self._key = key if key is not None else KeyMaterial.generate()
        self._modes = caller_modes
        self._idle_secs = idle_secs if idle_secs is not None else _idle_limit_secs()
        self._sessions: dict[SessionKey, ClientSession] = {}
        self._lock = threading.Lock()

    def _usable(self, session: ClientSession) -> bool:
        if session.state is not SessionState.ACTIVE:
            return False
        return (time.monotonic() - session.last_used) <= self._idle_secs

    def get_or_create(self, endpoint: str, config: SessionConfig) -> ClientSession:
        key = SessionKey(endpoint=endpoint, config_fingerprint=config_fingerprint(config))
        with self._lock:
            existing = self._sessions.get(key)
            if existing is not None:
                if self._usable(existing):
                    existing.last_used = time.monotonic()
                    return existing
                existing.close()
                del self._sessions[key]

        session = run_handshake(
            self._connect(endpoint),
            self._card,
            config,
            key=self._key,
            caller_modes=self._modes,
        )

        with self._lock:
            racer = self._sessions.get(key)
            if racer is not None and self._usable(racer):
                session.close()
                return racer
            self._sessions[key] = session
            return session

    def close_all(self) -> None:
        with self._lock:
            for session in self._sessions.values():
                session.close()
            self._sessions.clear()
