from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import replace

import pytest

from ldp.cli import default_pool
from ldp.delegates import DelegateProfile, ServerSession, profiles_from_pool
from ldp.errors import ConnectionClosedError
from ldp.identity import CapabilityEntry, DelegateIdentityCard
from ldp.trust import TrustDomainPolicy
from ldp.wire import InMemoryConnection, KeyMaterial, memory_pair


@pytest.fixture
def pool():
    return default_pool()


@pytest.fixture
def caller_key():
    return KeyMaterial.generate(1234)


@pytest.fixture
def caller_card(caller_key):
    return make_card("test-caller", public_key=caller_key.public_key)


def make_card(
    delegate_id: str,
    trust_domain: str = "research.internal",
    capabilities: tuple[CapabilityEntry, ...] | None = None,
    public_key: bytes | None = None,
    **overrides,
) -> DelegateIdentityCard:
    card = DelegateIdentityCard(
        delegate_id=delegate_id,
        principal_id="org:research-lab",
        model_family="qwen",
        model_name="qwen3",
        model_version="8b-2026.01",
        runtime_version="ollama-0.6.1",
        trust_domain=trust_domain,
        context_window=32768,
        modalities_supported=("text",),
        languages_supported=("en", "zh"),
        capabilities=capabilities
        or (
            CapabilityEntry("reasoning", 0.85, 5000, "medium"),
            CapabilityEntry("analysis", 0.82, 4500, "medium"),
        ),
        reasoning_profile="deep-analytical",
        cost_profile="medium",
        public_key=public_key,
    )
    return replace(card, **overrides) if overrides else card


@contextmanager
def memory_server(
    profiles: dict[str, DelegateProfile],
    policy: TrustDomainPolicy | None = None,
):
    """Run a ServerSession on the far end of an in-memory pair."""
    client_end, server_end = memory_pair()
    session = ServerSession(profiles, policy=policy)

    def serve() -> None:
        try:
            while True:
                envelope = server_end.recv()
                for reply in session.handle(envelope):
                    server_end.send(reply)
        except ConnectionClosedError:
            pass

    thread = threading.Thread(target=serve, daemon=True)
    thread.start()
    try:
        yield client_end, session
    finally:
        client_end.close()
        server_end.close()
        thread.join(timeout=5)


@pytest.fixture
def mock_profiles(pool):
    return profiles_from_pool(pool, key_seed=99)


class RecordingConnection:
    """Wraps a connection and keeps the encoded bytes of every send."""

    def __init__(self, inner: InMemoryConnection):
        self._inner = inner
        self.sent: list[bytes] = []

    def send(self, envelope):
        from ldp.wire import encode_envelope

        self.sent.append(encode_envelope(envelope))
        self._inner.send(envelope)

    def recv(self):
        return self._inner.recv()

    def close(self):
        self._inner.close()
