"""Delegate-side task handling: mock delegates, failure injection, serving.

A delegate profile wraps an identity card with deterministic behavior:
canned output lengths per task domain, simulated latency taken from the
card's latency hints, and an optional ordered failure script for
exercising the fallback chain. ``ServerSession`` is the callee half of
the session state machine; ``DelegateServer`` runs profiles behind the
TCP transport. An HTTP chat-completion client lets a profile answer from
a real local-inference backend instead of canned text.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from ldp.errors import (
    BackendError,
    BackendTimeoutError,
    ConnectionClosedError,
    MessageTooLargeError,
    ValidationError,
    WireFormatError,
)
from ldp.identity import DelegateIdentityCard, card_from_dict, validate_card
from ldp.payload import (
    ModeSet,
    PayloadMode,
    estimate_tokens,
    fallback_next,
    negotiate_mode,
    validate_frame_schema,
)
from ldp.provenance import ProvenanceRecord, record_to_dict
from ldp.routing import DelegatePool
from ldp.session import SessionConfig
from ldp.trust import NonceStore, TrustDomainPolicy, check_domain_join
from ldp.wire import (
    Connection,
    KeyMaterial,
    MessageEnvelope,
    MessageType,
    NonceSource,
    TcpListener,
    new_envelope,
    now_ms,
    sign_envelope,
    verify_envelope,
)


class FailureType(Enum):
    """The four communication failure classes used in fallback analysis."""

    SCHEMA_MISMATCH = "schema_mismatch"
    CODEC_INCOMPATIBILITY = "codec_incompatibility"
    VERSION_MISMATCH = "version_mismatch"
    TIMEOUT_DEGRADATION = "timeout_degradation"


#: Per-step recovery latency when falling back one mode, by failure type.
#: Schema and codec values come from the failure-recovery analysis; the
#: version and timeout values are fitted so the four-type mean is 112 ms.
RECOVERY_LATENCY_MS: dict[FailureType, int] = {
    FailureType.SCHEMA_MISMATCH: 50,
    FailureType.CODEC_INCOMPATIBILITY: 80,
    FailureType.VERSION_MISMATCH: 118,
    FailureType.TIMEOUT_DEGRADATION: 200,
}

#: Quality lost per fallback step on the 0-1 scale.
QUALITY_DEGRADATION_PER_STEP = 0.16

_DEFAULT_OUTPUT_TOKENS = {
    "classification": 40,
    "extraction": 60,
    "reasoning": 160,
    "analysis": 140,
    "coding": 120,
    "math": 120,
    "default": 100,
}

_MOCK_VOCABULARY = (
    "analysis result indicates the requested output follows from the given "
    "input considering each constraint in turn with supporting detail and a "
    "short justification of the final answer plus relevant caveats"
).split()

BACKEND_URL_ENV = "LDP_BACKEND_URL"


@dataclass
class DelegateProfile:
    """Deterministic behavior bound to one identity card."""

    card: DelegateIdentityCard
    key: KeyMaterial
    supported_modes: ModeSet = field(
        default_factory=lambda: ModeSet.of(PayloadMode.TEXT, PayloadMode.SEMANTIC_FRAME)
    )
    canned_output_length_tokens: dict[str, int] = field(
        default_factory=lambda: dict(_DEFAULT_OUTPUT_TOKENS)
    )
    failure_script: list[FailureType] = field(default_factory=list)
    backend_url: str | None = None

    def simulated_latency_ms(self, skill: str | None) -> int:
        entry = self.card.capability(skill) if skill else None
        if entry is None and self.card.capabilities:
            entry = self.card.capabilities[0]
        return entry.latency_hint_ms_p50 if entry else 0

    def confidence_for(self, skill: str | None) -> float:
        entry = self.card.capability(skill) if skill else None
        if entry is None and self.card.capabilities:
            entry = self.card.capabilities[0]
        return entry.quality_hint if entry else 0.5

    def output_length(self, domain: str | None) -> int:
        if domain and domain in self.canned_output_length_tokens:
            return self.canned_output_length_tokens[domain]
        return self.canned_output_length_tokens.get("default", 100)


def mock_output(profile: DelegateProfile, request_data: bytes, domain: str | None) -> str:
    """Deterministic canned text: same profile + same request bytes, same output."""
    digest = hashlib.sha256(profile.card.delegate_id.encode("utf-8") + request_data).digest()
    rng = random.Random(int.from_bytes(digest[:8], "big"))
    target_tokens = profile.output_length(domain)
    # estimate_tokens(words) = ceil(1.3 * words), so invert for the word count.
    word_count = max(1, (10 * target_tokens) // 13)
    words = [rng.choice(_MOCK_VOCABULARY) for _ in range(word_count)]
    return " ".join(words)


def make_provenance(profile: DelegateProfile, skill: str | None, mode: PayloadMode) -> ProvenanceRecord:
    return ProvenanceRecord(
        produced_by=f"delegate:{profile.card.delegate_id}",
        model_version=profile.card.model_version,
        payload_mode_used=mode.wire_name,
        confidence_score=profile.confidence_for(skill),
        confidence_method="self-report",
        verification_performed=False,
        verification_status="none",
    )


def http_backend_invoke(endpoint: str, prompt: str, timeout_ms: int, model: str = "") -> str:
    """POST a prompt to a chat-completion backend and return its text.

    Expects a JSON body ``{"model", "prompt"}`` and a JSON response with a
    ``response`` field. Timeouts surface as :class:`BackendTimeoutError`
    (the timeout-degradation failure class); non-success statuses as
    :class:`BackendError` carrying the code.
    """
    payload = json.dumps({"model": model, "prompt": prompt}).encode("utf-8")
    request = urllib.request.Request(
        endpoint, data=payload, headers={"Content-Type": "application/json"}, method="POST"
    )
    try:
        with urllib.request.urlopen(request, timeout=timeout_ms / 1000.0) as response:
            body = response.read()
    except urllib.error.HTTPError as exc:
        raise BackendError(f"backend returned status {exc.code}", status_code=exc.code) from exc
    except TimeoutError as exc:
        raise BackendTimeoutError(f"backend did not answer within {timeout_ms} ms") from exc
    except urllib.error.URLError as exc:
        if isinstance(exc.reason, TimeoutError):
            raise BackendTimeoutError(f"backend did not answer within {timeout_ms} ms") from exc
        raise ConnectionClosedError(f"backend unreachable: {exc.reason}") from exc
    try:
        parsed = json.loads(body.decode("utf-8"))
        return parsed["response"]
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise BackendError(f"backend returned a malformed response: {exc}") from exc


#: Failure class raised by a backend timeout, for callers mapping errors.
BACKEND_TIMEOUT_FAILURE = FailureType.TIMEOUT_DEGRADATION


class _ServerState(Enum):
    AWAIT_HELLO = "await_hello"
    AWAIT_PROPOSE = "await_propose"
    ACTIVE = "active"
    CLOSED = "closed"
    FAILED = "failed"


class ServerSession:
    """Callee half of the session state machine for one connection.

    ``handle`` consumes one envelope and returns the replies to send; it
    performs signature verification, replay protection, the trust-domain
    admission check, mode negotiation, and task handling.
    """

    def __init__(
        self,
        profiles: dict[str, DelegateProfile],
        policy: TrustDomainPolicy | None = None,
        nonce_store: NonceStore | None = None,
        nonces: NonceSource | None = None,
        clock: Callable[[], int] = now_ms,
        session_counter: Callable[[], str] | None = None,
    ):
        if not profiles:
            raise ValidationError("server requires at least one delegate profile")
        self._profiles = profiles
        self._policy = policy
        self._store = nonce_store if nonce_store is not None else NonceStore(clock=clock)
        self._nonces = nonces if nonces is not None else NonceSource()
        self._clock = clock
        self._session_ids = session_counter or (lambda: self._nonces.next())
        self.state = _ServerState.AWAIT_HELLO
        self.profile: DelegateProfile | None = None
        self.session_id: str | None = None
        self.config: SessionConfig | None = None
        self.rounds: list[tuple[bytes, bytes]] = []
        self._caller_modes: ModeSet | None = None
        self._caller_key: bytes | None = None

    # -- replies -------------------------------------------------------------

    def _reply(
        self, message_type: MessageType, body: dict[str, Any]
    ) -> MessageEnvelope:
        profile = self.profile if self.profile is not None else next(iter(self._profiles.values()))
        envelope = new_envelope(
            message_type,
            sender_id=profile.card.delegate_id,
            body=body,
            session_id=self.session_id,
            nonces=self._nonces,
            clock=self._clock,
        )
        return sign_envelope(envelope, profile.key)

    def _error(self, reason: str, mechanism: str | None = None, fail: bool = True) -> MessageEnvelope:
        if fail:
            self.state = _ServerState.FAILED
        body: dict[str, Any] = {"reason": reason}
        if mechanism:
            body["mechanism"] = mechanism
        return self._reply(MessageType.ERROR, body)

    # -- dispatch ------------------------------------------------------------

    def handle(self, envelope: MessageEnvelope) -> list[MessageEnvelope]:
        if self.state in (_ServerState.CLOSED, _ServerState.FAILED):
            return [self._error("session is no longer accepting messages", fail=False)]

        if self._caller_key is not None and not verify_envelope(envelope, self._caller_key):
            return [self._error("envelope failed signature verification")]
        if not self._store.check_and_record(envelope.sender_id, envelope.nonce):
            return [self._error("duplicate nonce (replay rejected)")]

        handlers = {
            MessageType.HELLO: self._on_hello,
            MessageType.SESSION_PROPOSE: self._on_propose,
            MessageType.TASK_SUBMIT: self._on_task,
            MessageType.SESSION_CLOSE: self._on_close,
        }
        handler = handlers.get(envelope.message_type)
        if handler is None:
            return [self._error(f"unexpected {envelope.message_type.value}")]
        return handler(envelope)

    def _on_hello(self, envelope: MessageEnvelope) -> list[MessageEnvelope]:
        if self.state is not _ServerState.AWAIT_HELLO:
            return [self._error("HELLO after session establishment began")]
        raw_card = envelope.body.get("card")
        if not isinstance(raw_card, dict):
            return [self._error("HELLO lacks an identity card")]
        try:
            card = card_from_dict(raw_card)
        except ValidationError as exc:
            return [self._error(f"malformed identity card: {'; '.join(exc.report)}")]
        report = validate_card(card)
        if report:
            return [self._error(f"invalid identity card: {'; '.join(report)}")]

        if card.public_key is not None and not verify_envelope(envelope, card.public_key):
            return [self._error("HELLO signature does not match the card's public key")]
        self._caller_key = card.public_key

        if self._policy is not None:
            outcome = check_domain_join(self._policy, card)
            if outcome.detected:
                return [self._error("trust domain rejected the caller", mechanism=outcome.mechanism)]

        try:
            self._caller_modes = ModeSet.of(*envelope.body.get("supported_modes", [0]))
        except (ValidationError, ValueError):
            return [self._error("caller mode set must include mode 0")]

        target = envelope.body.get("target_delegate")
        if target is None:
            self.profile = next(iter(self._profiles.values()))
        else:
            profile = self._profiles.get(target)
            if profile is None:
                return [self._error(f"unknown delegate {target!r}")]
            self.profile = profile

        self.state = _ServerState.AWAIT_PROPOSE
        return [
            self._reply(
                MessageType.CAPABILITY_MANIFEST,
                {
                    "delegate_id": self.profile.card.delegate_id,
                    "supported_modes": self.profile.supported_modes.ordinals(),
                    "public_key": self.profile.key.public_key.hex(),
                },
            )
        ]

    def _on_propose(self, envelope: MessageEnvelope) -> list[MessageEnvelope]:
        if self.state is not _ServerState.AWAIT_PROPOSE:
            return [self._error("SESSION_PROPOSE before HELLO")]
        assert self.profile is not None and self._caller_modes is not None
        try:
            proposal = SessionConfig.from_dict(envelope.body)
        except ValidationError as exc:
            return [self._error(f"malformed session proposal: {exc}")]

        negotiated = negotiate_mode(self._caller_modes, self.profile.supported_modes)
        accepted_mode = min(proposal.payload_mode, negotiated)
        accepted = SessionConfig(
            payload_mode=accepted_mode,
            latency_target_ms=proposal.latency_target_ms,
            cost_budget_tokens=proposal.cost_budget_tokens,
            privacy_constraints=proposal.privacy_constraints,
            audit_level=proposal.audit_level,
        )
        self.config = accepted
        self.session_id = self._session_ids()
        self.state = _ServerState.ACTIVE
        return [
            self._reply(
                MessageType.SESSION_ACCEPT,
                {"session_id": self.session_id, "config": accepted.to_dict()},
            )
        ]

    def _on_task(self, envelope: MessageEnvelope) -> list[MessageEnvelope]:
        if self.state is not _ServerState.ACTIVE:
            return [self._error("TASK_SUBMIT outside an active session")]
        assert self.profile is not None and self.config is not None
        body = envelope.body
        try:
            mode = PayloadMode(body.get("mode", 0))
        except ValueError:
            return [self._error(f"unknown payload mode {body.get('mode')!r}", fail=False)]
        if mode > self.config.payload_mode:
            return [
                self._error(
                    f"payload mode {mode.name} exceeds session mode "
                    f"{self.config.payload_mode.name}",
                    fail=False,
                )
            ]
        content = body.get("content", "")
        data = content.encode("utf-8")

        failure: FailureType | None = None
        if self.profile.failure_script:
            failure = self.profile.failure_script.pop(0)
        elif mode is PayloadMode.SEMANTIC_FRAME and not validate_frame_schema(data):
            failure = FailureType.SCHEMA_MISMATCH

        if failure is not None:
            to_mode = fallback_next(mode)
            if to_mode is None:
                return [
                    self._error(
                        f"{failure.value} at mode {mode.name} with no fallback remaining"
                    )
                ]
            return [
                self._reply(
                    MessageType.FALLBACK_NOTICE,
                    {
                        "failure": failure.value,
                        "from_mode": int(mode),
                        "to_mode": int(to_mode),
                        "recovery_ms": RECOVERY_LATENCY_MS[failure],
                    },
                )
            ]

        return [self._task_result(data, mode, body.get("skill"), body.get("domain"))]

    def _task_result(
        self, data: bytes, mode: PayloadMode, skill: str | None, domain: str | None
    ) -> MessageEnvelope:
        assert self.profile is not None
        backend = self.profile.backend_url
        if backend:
            output = http_backend_invoke(
                backend,
                prompt=data.decode("utf-8"),
                timeout_ms=60_000,
                model=self.profile.card.model_name,
            )
        else:
            output = mock_output(self.profile, data, domain)
        self.rounds.append((data, output.encode("utf-8")))
        provenance = make_provenance(self.profile, skill, mode)
        return self._reply(
            MessageType.TASK_RESULT,
            {
                "mode": int(mode),
                "content": output,
                "token_estimate": estimate_tokens(output),
                "provenance": record_to_dict(provenance),
                "simulated_latency_ms": self.profile.simulated_latency_ms(skill),
            },
        )

    def _on_close(self, envelope: MessageEnvelope) -> list[MessageEnvelope]:
        self.state = _ServerState.CLOSED
        self.rounds.clear()
        return []


def handle_task(
    profile: DelegateProfile,
    request: MessageEnvelope,
    session_mode: PayloadMode = PayloadMode.SEMANTIC_FRAME,
) -> MessageEnvelope:
    """Handle one TASK_SUBMIT against a profile inside a synthetic session.

    Convenience wrapper over :class:`ServerSession` for direct use in
    tests and simulations; wire sessions go through the server.
    """
    session = ServerSession({profile.card.delegate_id: profile})
    session.profile = profile
    session.config = SessionConfig(payload_mode=session_mode)
    session.session_id = "synthetic"
    session.state = _ServerState.ACTIVE
    replies = session._on_task(request)
    return replies[0]


def profiles_from_pool(
    pool: DelegatePool, key_seed: int | None = None
) -> dict[str, DelegateProfile]:
    """Build default profiles (one per card) with per-delegate signing keys."""
    profiles: dict[str, DelegateProfile] = {}
    for index, card in enumerate(pool):
        seed = None if key_seed is None else key_seed + index
        profiles[card.delegate_id] = DelegateProfile(card=card, key=KeyMaterial.generate(seed))
    return profiles


class DelegateServer:
    """TCP server running delegate profiles; one thread per connection."""

    def __init__(
        self,
        profiles: dict[str, DelegateProfile],
        policy: TrustDomainPolicy | None = None,
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self._profiles = profiles
        self._policy = policy
        self._listener = TcpListener(host=host, port=port)
        self._store = NonceStore()
        self._threads: list[threading.Thread] = []
        self._accept_thread: threading.Thread | None = None
        self._stopping = False

    @property
    def address(self) -> tuple[str, int]:
        return self._listener.address

    def start(self) -> None:
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self) -> None:
        while not self._stopping:
            try:
                conn = self._listener.accept()
            except ConnectionClosedError:
                return
            thread = threading.Thread(target=self._serve_connection, args=(conn,), daemon=True)
            thread.start()
            self._threads.append(thread)

    def _serve_connection(self, conn: Connection) -> None:
        session = ServerSession(self._profiles, policy=self._policy, nonce_store=self._store)
        try:
            while True:
                try:
                    envelope = conn.recv()
                except (WireFormatError, MessageTooLargeError):
                    conn.send(session._error("malformed frame", fail=False))
                    continue
                for reply in session.handle(envelope):
                    conn.send(reply)
                if session.state is _ServerState.CLOSED:
                    return
        except ConnectionClosedError:
            return
        finally:
            conn.close()

    def stop(self) -> None:
        self._stopping = True
        self._listener.close()


def serve_pool(
    pool: DelegatePool,
    policy: TrustDomainPolicy | None = None,
    host: str = "127.0.0.1",
    port: int = 0,
    backend_url: str | None = None,
    key_seed: int | None = None,
) -> DelegateServer:
    """Start mock delegates for every card in the pool; returns the server."""
    profiles = profiles_from_pool(pool, key_seed=key_seed)
    if backend_url:
        for profile in profiles.values():
            profile.backend_url = backend_url
    server = DelegateServer(profiles, policy=policy, host=host, port=port)
    server.start()
    return server
