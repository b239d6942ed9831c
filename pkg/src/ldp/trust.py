"""Trust domains: membership checks, replay protection, and the policy engine.

A trust domain policy names the domain, its member delegates, the peer
domains it accepts, per-delegate capability scopes, and optional
jurisdiction and cost limits. Four detectors cover the attack taxonomy
(untrusted domain join, capability escalation, replay, cross-domain
access), each firing a named mechanism; a bearer-token revocation check
models what a transport-auth-only protocol can see. Detections are
returned, never raised: a fired check is a normal outcome.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable

from ldp.errors import ValidationError
from ldp.identity import DelegateIdentityCard
from ldp.wire import TIMESTAMP_SKEW_TOLERANCE_MS, MessageEnvelope, now_ms

# Detection mechanism names, matching the attack-taxonomy wording.
MECHANISM_DOMAIN_MEMBERSHIP = "Trust domain membership check"
MECHANISM_CAPABILITY_MANIFEST = "Capability manifest validation"
MECHANISM_NONCE_TIMESTAMP = "Session nonce and timestamp verification"
MECHANISM_CROSS_DOMAIN = "Cross-domain policy enforcement"
MECHANISM_BEARER_REVOCATION = "Bearer token revocation"


class AttackKind(Enum):
    UNTRUSTED_DOMAIN_JOIN = "untrusted_domain_join"
    CAPABILITY_ESCALATION = "capability_escalation"
    REPLAY_ATTACK = "replay_attack"
    CROSS_DOMAIN_ACCESS = "cross_domain_access"


KIND_MECHANISMS = {
    AttackKind.UNTRUSTED_DOMAIN_JOIN: MECHANISM_DOMAIN_MEMBERSHIP,
    AttackKind.CAPABILITY_ESCALATION: MECHANISM_CAPABILITY_MANIFEST,
    AttackKind.REPLAY_ATTACK: MECHANISM_NONCE_TIMESTAMP,
    AttackKind.CROSS_DOMAIN_ACCESS: MECHANISM_CROSS_DOMAIN,
}


@dataclass(frozen=True)
class TrustDomainPolicy:
    """Configured security boundary for one trust domain."""

    domain: str
    member_delegates: frozenset[str] = frozenset()
    allowed_peer_domains: frozenset[str] = frozenset()
    capability_scopes: dict[str, frozenset[str]] = field(default_factory=dict)
    jurisdiction_allowlist: frozenset[str] | None = None
    cost_limit_tokens: int | None = None

    def __post_init__(self) -> None:
        if not self.domain:
            raise ValidationError("trust domain policy requires a non-empty domain")

    def enforces_membership(self) -> bool:
        return bool(self.member_delegates)


def policy_from_dict(data: dict[str, Any]) -> TrustDomainPolicy:
    scopes_raw = data.get("capability_scopes", {})
    if not isinstance(scopes_raw, dict):
        raise ValidationError("capability_scopes must be an object")
    scopes = {key: frozenset(value) for key, value in scopes_raw.items()}
    allowlist = data.get("jurisdiction_allowlist")
    return TrustDomainPolicy(
        domain=data.get("domain", ""),
        member_delegates=frozenset(data.get("members", [])),
        allowed_peer_domains=frozenset(data.get("allowed_peer_domains", [])),
        capability_scopes=scopes,
        jurisdiction_allowlist=frozenset(allowlist) if allowlist is not None else None,
        cost_limit_tokens=data.get("cost_limit_tokens"),
    )


def policy_from_json(text: str) -> TrustDomainPolicy:
    data = json.loads(text)
    if not isinstance(data, dict):
        raise ValidationError("policy file must contain a JSON object")
    return policy_from_dict(data)


def policy_to_dict(policy: TrustDomainPolicy) -> dict[str, Any]:
    return {
        "domain": policy.domain,
        "members": sorted(policy.member_delegates),
        "allowed_peer_domains": sorted(policy.allowed_peer_domains),
        "capability_scopes": {k: sorted(v) for k, v in sorted(policy.capability_scopes.items())},
        "jurisdiction_allowlist": (
            sorted(policy.jurisdiction_allowlist)
            if policy.jurisdiction_allowlist is not None
            else None
        ),
        "cost_limit_tokens": policy.cost_limit_tokens,
    }


@dataclass(frozen=True)
class DetectionOutcome:
    """Result of a security check; ``mechanism`` names the check that fired."""

    detected: bool
    mechanism: str = ""
    false_positive: bool = False

    def with_ground_truth(self, malicious: bool) -> "DetectionOutcome":
        return replace(self, false_positive=self.detected and not malicious)


_PASS = DetectionOutcome(detected=False)


class NonceStore:
    """Sliding-window record of (sender, nonce) pairs for replay detection.

    Thread-safe: the duplicate test and the insert happen under one lock.
    """

    def __init__(
        self,
        window_secs: int = 300,
        clock: Callable[[], int] = now_ms,
        skew_tolerance_ms: int = TIMESTAMP_SKEW_TOLERANCE_MS,
    ):
        if window_secs <= 0:
            raise ValueError("window_secs must be positive")
        self.window_secs = window_secs
        self.skew_tolerance_ms = skew_tolerance_ms
        self._clock = clock
        self._seen: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()

    def check_and_record(self, sender_id: str, nonce: str) -> bool:
        """True if the pair is fresh (and now recorded); False on duplicate."""
        now = self._clock()
        horizon = now - self.window_secs * 1000
        key = (sender_id, nonce)
        with self._lock:
            stale = [k for k, seen_at in self._seen.items() if seen_at < horizon]
            for k in stale:
                del self._seen[k]
            if key in self._seen:
                return False
            self._seen[key] = now
            return True

    def timestamp_fresh(self, timestamp_ms: int) -> bool:
        return abs(self._clock() - timestamp_ms) <= self.skew_tolerance_ms


def check_domain_join(
    policy: TrustDomainPolicy, card: DelegateIdentityCard
) -> DetectionOutcome:
    """Detect joins from outside the domain or by non-members.

    Cards claiming an allowlisted peer domain pass; cards claiming this
    policy's own domain must appear in the member set when membership is
    enforced.
    """
    if card.trust_domain == policy.domain:
        if policy.enforces_membership() and card.delegate_id not in policy.member_delegates:
            return DetectionOutcome(detected=True, mechanism=MECHANISM_DOMAIN_MEMBERSHIP)
        return _PASS
    if card.trust_domain in policy.allowed_peer_domains:
        return _PASS
    return DetectionOutcome(detected=True, mechanism=MECHANISM_DOMAIN_MEMBERSHIP)


def check_capability_claim(
    policy: TrustDomainPolicy, delegate_id: str, claimed: list[str]
) -> DetectionOutcome:
    """Detect claims beyond the delegate's registered capability scope.

    An unregistered delegate claiming anything is a detection: there is
    no manifest on file to validate against.
    """
    if not claimed:
        return _PASS
    scope = policy.capability_scopes.get(delegate_id)
    if scope is None:
        return DetectionOutcome(detected=True, mechanism=MECHANISM_CAPABILITY_MANIFEST)
    if any(name not in scope for name in claimed):
        return DetectionOutcome(detected=True, mechanism=MECHANISM_CAPABILITY_MANIFEST)
    return _PASS


def check_replay(store: NonceStore, envelope: MessageEnvelope) -> DetectionOutcome:
    """Detect re-presented nonces and stale timestamps.

    A fresh envelope is recorded and passes; the same (sender, nonce)
    within the window, or a timestamp outside the skew tolerance, fires.
    """
    if not store.timestamp_fresh(envelope.timestamp_ms):
        return DetectionOutcome(detected=True, mechanism=MECHANISM_NONCE_TIMESTAMP)
    if not store.check_and_record(envelope.sender_id, envelope.nonce):
        return DetectionOutcome(detected=True, mechanism=MECHANISM_NONCE_TIMESTAMP)
    return _PASS


def check_cross_domain(
    policy: TrustDomainPolicy,
    caller_domain: str,
    target_delegate: str,
    target_domain: str,
) -> DetectionOutcome:
    """Detect cross-domain invocations the target's policy does not allow."""
    if caller_domain == target_domain:
        return _PASS
    if caller_domain in policy.allowed_peer_domains:
        return _PASS
    return DetectionOutcome(detected=True, mechanism=MECHANISM_CROSS_DOMAIN)


@dataclass(frozen=True)
class TaskPolicyRequest:
    """Task descriptor evaluated by the policy engine."""

    delegate_id: str
    capability: str
    jurisdiction: str | None = None
    token_estimate: int = 0


@dataclass(frozen=True)
class PolicyDecision:
    allowed: bool
    reason: str


def evaluate_policy(policy: TrustDomainPolicy, task: TaskPolicyRequest) -> PolicyDecision:
    """Allow or deny a task under capability, jurisdiction, and cost rules."""
    scope = policy.capability_scopes.get(task.delegate_id)
    if scope is not None and task.capability not in scope:
        return PolicyDecision(
            allowed=False,
            reason=f"capability {task.capability!r} out of scope for {task.delegate_id!r}",
        )
    if policy.jurisdiction_allowlist is not None and task.jurisdiction is not None:
        if task.jurisdiction not in policy.jurisdiction_allowlist:
            return PolicyDecision(
                allowed=False,
                reason=f"jurisdiction {task.jurisdiction!r} not in allowlist",
            )
    if policy.cost_limit_tokens is not None and task.token_estimate > policy.cost_limit_tokens:
        return PolicyDecision(
            allowed=False,
            reason=(
                f"estimated {task.token_estimate} tokens exceeds "
                f"cost limit {policy.cost_limit_tokens}"
            ),
        )
    return PolicyDecision(allowed=True, reason="all policy rules satisfied")


def a2a_bearer_check(token: str, revocation_list: set[str]) -> DetectionOutcome:
    """Transport-auth baseline: fires only when the token is revoked."""
    if token in revocation_list:
        return DetectionOutcome(detected=True, mechanism=MECHANISM_BEARER_REVOCATION)
    return _PASS


# --- Attack scenarios -------------------------------------------------------
#
# A scenario carries exactly one action; evaluation dispatches to the
# applicable detectors and reports the first mechanism that fires.


@dataclass(frozen=True)
class JoinAction:
    card: DelegateIdentityCard


@dataclass(frozen=True)
class ClaimAction:
    delegate_id: str
    claimed: tuple[str, ...]


@dataclass(frozen=True)
class EnvelopeAction:
    envelope: MessageEnvelope
    previously_seen: bool = False


@dataclass(frozen=True)
class InvokeAction:
    caller_domain: str
    target_delegate: str
    target_domain: str


ScenarioAction = JoinAction | ClaimAction | EnvelopeAction | InvokeAction


@dataclass(frozen=True)
class AttackScenario:
    """One security scenario: an action tagged with intent ground truth."""

    kind: AttackKind
    actor_card: DelegateIdentityCard
    action: ScenarioAction
    ground_truth_malicious: bool
    bearer_token: str = ""


def evaluate_scenario(
    policy: TrustDomainPolicy,
    scenario: AttackScenario,
    store: NonceStore | None = None,
) -> DetectionOutcome:
    """Run the applicable trust-domain detectors and attach ground truth."""
    action = scenario.action
    if isinstance(action, JoinAction):
        outcome = check_domain_join(policy, action.card)
    elif isinstance(action, ClaimAction):
        outcome = check_capability_claim(policy, action.delegate_id, list(action.claimed))
    elif isinstance(action, EnvelopeAction):
        local_store = store if store is not None else NonceStore()
        if action.previously_seen:
            local_store.check_and_record(action.envelope.sender_id, action.envelope.nonce)
        outcome = check_replay(local_store, action.envelope)
    elif isinstance(action, InvokeAction):
        outcome = check_cross_domain(
            policy, action.caller_domain, action.target_delegate, action.target_domain
        )
    else:  # pragma: no cover - exhaustive over ScenarioAction
        raise TypeError(f"unknown scenario action {action!r}")
    return outcome.with_ground_truth(scenario.ground_truth_malicious)
