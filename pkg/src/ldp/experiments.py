"""Deterministic scenario generators and experiment runners.

Five experiments reproduce the protocol's headline behaviors at desk
scale: rq1 compares the three routing policies on a mixed-difficulty task
set, rq2 measures payload encoding sizes, rq4 models session vs stateless
token overhead over multi-round conversations, rq5 runs the security
scenario mix against the trust-domain checks and the bearer-token
baseline, and rq6 exercises the fallback chain under injected failures.
Every runner is a pure function of its inputs and seed; reports write
byte-identically across runs.
"""

from __future__ import annotations

import csv
import io
import json
import random
import statistics
from dataclasses import dataclass, field
from typing import Any

from ldp.delegates import (
    QUALITY_DEGRADATION_PER_STEP,
    RECOVERY_LATENCY_MS,
    FailureType,
)
from ldp.identity import DelegateIdentityCard
from ldp.payload import (
    PayloadMode,
    SemanticFrame,
    encode_a2a,
    encode_mode0,
    encode_mode1,
    fallback_next,
)
from ldp.routing import (
    DelegatePool,
    RoutingDecision,
    TaskSpec,
    route_a2a,
    route_ldp,
    route_random,
)
from ldp.trust import (
    AttackKind,
    AttackScenario,
    ClaimAction,
    EnvelopeAction,
    InvokeAction,
    JoinAction,
    NonceStore,
    TrustDomainPolicy,
    a2a_bearer_check,
    evaluate_scenario,
)
from ldp.wire import KeyMaterial, MessageType, NonceSource, new_envelope, sign_envelope

DEFAULT_SEED = 42


# --- Report model -----------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    condition: str
    metric: str
    value: float | int | str
    kind: str = "run"  # "run" or "aggregate"


@dataclass
class ExperimentReport:
    experiment: str
    seed: int
    rows: list[ReportRow] = field(default_factory=list)

    def add(self, condition: str, metric: str, value: float | int | str) -> None:
        self.rows.append(ReportRow(condition, metric, value))

    def add_aggregate(self, condition: str, metric: str, value: float | int | str) -> None:
        self.rows.append(ReportRow(condition, metric, value, kind="aggregate"))

    def run_rows(self) -> list[ReportRow]:
        return [row for row in self.rows if row.kind == "run"]

    def aggregate_rows(self) -> list[ReportRow]:
        return [row for row in self.rows if row.kind == "aggregate"]

    def value(self, condition: str, metric: str) -> float | int | str:
        for row in self.rows:
            if row.condition == condition and row.metric == metric:
                return row.value
        raise KeyError(f"no row for condition={condition!r} metric={metric!r}")


def report_to_json(report: ExperimentReport) -> str:
    payload = {
        "experiment": report.experiment,
        "seed": report.seed,
        "rows": [
            {"condition": r.condition, "metric": r.metric, "value": r.value, "kind": r.kind}
            for r in report.rows
        ],
    }
    return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"


def report_from_json(text: str) -> ExperimentReport:
    data = json.loads(text)
    return ExperimentReport(
        experiment=data["experiment"],
        seed=data["seed"],
        rows=[
            ReportRow(r["condition"], r["metric"], r["value"], r.get("kind", "run"))
            for r in data["rows"]
        ],
    )


def report_to_csv(report: ExperimentReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["experiment", "condition", "metric", "value"])
    for row in report.rows:
        writer.writerow([report.experiment, row.condition, row.metric, row.value])
    return buffer.getvalue()


def write_report(report: ExperimentReport, format: str, path: str) -> None:
    """Serialize a report to disk; output is byte-stable for a fixed seed."""
    if format == "csv":
        text = report_to_csv(report)
    elif format == "json":
        text = report_to_json(report)
    else:
        raise ValueError(f"unknown report format {format!r} (expected csv or json)")
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(text)


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def _add_mean_std(
    report: ExperimentReport, condition: str, metric: str, values: list[float]
) -> None:
    report.add_aggregate(condition, f"mean_{metric}", _mean(values))
    report.add_aggregate(condition, f"stddev_{metric}", statistics.pstdev(values))


# --- RQ1: routing -----------------------------------------------------------

_EASY_PROMPTS = [
    ("classification", "classification", "Classify the sentiment of this product review as positive, negative, or neutral."),
    ("extraction", "extraction", "Extract all dates and monetary amounts from this contract paragraph."),
]
_MEDIUM_PROMPTS = [
    ("coding", "code", "Write a function that implements binary search on a sorted list with duplicate handling."),
    ("analysis", "analysis", "Compare the tradeoffs between microservices and monolithic architectures for a small team."),
    ("extraction", "extraction", "Extract the entities and their relationships from this incident report."),
]
_HARD_PROMPTS = [
    ("reasoning", "reasoning", "Given the following set of constraints, determine whether a valid schedule exists and prove or disprove its feasibility."),
    ("math", "reasoning", "Prove that the sum of the first n odd numbers equals n squared using mathematical induction."),
    ("analysis", "analysis", "Assess the long-term failure modes of this distributed consensus design under partial partitions."),
]


def default_rq1_tasks() -> list[TaskSpec]:
    """30 fixed tasks: 10 per difficulty, domains cycled within each band."""
    tasks: list[TaskSpec] = []
    for difficulty, prompts in (
        ("easy", _EASY_PROMPTS),
        ("medium", _MEDIUM_PROMPTS),
        ("hard", _HARD_PROMPTS),
    ):
        for i in range(10):
            domain, skill, prompt = prompts[i % len(prompts)]
            tasks.append(
                TaskSpec(
                    domain=domain,
                    difficulty=difficulty,
                    required_skill=skill,
                    prompt=f"{prompt} (task {difficulty}-{i})",
                )
            )
    return tasks


def run_rq1(pool: DelegatePool, tasks: list[TaskSpec], seed: int = DEFAULT_SEED) -> ExperimentReport:
    """Route every task under all three policies; aggregate latency per difficulty."""
    report = ExperimentReport(experiment="rq1", seed=seed)
    rng = random.Random(seed)
    latencies: dict[tuple[str, str], list[float]] = {}
    for index, task in enumerate(tasks):
        for policy, router in (
            ("ldp", lambda t: route_ldp(pool, t)),
            ("a2a", lambda t: route_a2a(pool, t)),
            ("random", lambda t: route_random(pool, t, rng)),
        ):
            condition = f"{policy}/{task.difficulty}"
            try:
                decision: RoutingDecision = router(task)
            except Exception as exc:
                report.add(condition, f"task_{index:02d}_error", str(exc))
                continue
            report.add(condition, f"task_{index:02d}_chosen", decision.chosen)
            report.add(condition, f"task_{index:02d}_latency_ms", decision.expected_latency_ms)
            latencies.setdefault((policy, task.difficulty), []).append(
                float(decision.expected_latency_ms)
            )
    for (policy, difficulty), values in sorted(latencies.items()):
        _add_mean_std(report, f"{policy}/{difficulty}", "expected_latency_ms", values)
    return report


# --- RQ2: payload sizes -----------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    name: str
    text: str
    frame: SemanticFrame


SENTIMENT_TASK_TEXT = (
    "Please classify the sentiment of the following customer review as "
    "positive, negative, or neutral. The review is: \"The product arrived on "
    "time and works exactly as described. Very satisfied with the purchase.\" "
    "Please provide your classification along with a brief justification for "
    "your choice."
)

SENTIMENT_TASK_FRAME = SemanticFrame(
    task_type="classification",
    instruction="Classify sentiment",
    input="The product arrived on time and works exactly as described. Very satisfied.",
    expected_output_format="label+justification",
    labels=("positive", "negative", "neutral"),
)


def default_rq2_corpus() -> list[CorpusEntry]:
    return [
        CorpusEntry("sentiment_review", SENTIMENT_TASK_TEXT, SENTIMENT_TASK_FRAME),
        CorpusEntry(
            "schedule_handoff",
            (
                "You are asked to reason step by step about the following scheduling "
                "problem and hand off your intermediate conclusions to the next agent. "
                "Three meetings must be scheduled without overlap given the constraints "
                "below. Constraints: meeting A lasts one hour and must start before "
                "noon; meeting B requires the same room as meeting A; meeting C cannot "
                "start until meeting B has finished. Please state whether a valid "
                "schedule exists and explain your reasoning briefly."
            ),
            SemanticFrame(
                task_type="reasoning",
                instruction="Determine whether a valid schedule exists",
                input=(
                    "Meeting A lasts one hour and must start before noon; meeting B "
                    "requires the same room as A; meeting C cannot start until B has "
                    "finished."
                ),
                expected_output_format="conclusion+reasoning",
            ),
        ),
        CorpusEntry(
            "summary_verification",
            (
                "Please verify whether the following summary accurately reflects the "
                "source text and answer yes or no with a short explanation. Summary: "
                "The quarterly report shows revenue growth in all regions. Source: "
                "Revenue grew in Europe and Asia while the Americas declined slightly "
                "compared to the previous quarter."
            ),
            SemanticFrame(
                task_type="verification",
                instruction="Verify summary against source",
                input=(
                    "Summary: The quarterly report shows revenue growth in all regions. "
                    "Source: Revenue grew in Europe and Asia while the Americas "
                    "declined slightly."
                ),
                expected_output_format="yes/no+explanation",
                labels=("yes", "no"),
            ),
        ),
    ]


def run_rq2(corpus: list[CorpusEntry], seed: int = DEFAULT_SEED) -> ExperimentReport:
    """Token estimates for text, frame, and envelope-JSON forms of each entry."""
    report = ExperimentReport(experiment="rq2", seed=seed)
    if not corpus:
        return report
    frame_text_ratios: list[float] = []
    frame_a2a_ratios: list[float] = []
    for entry in corpus:
        mode0 = encode_mode0(entry.text)
        mode1 = encode_mode1(entry.frame)
        a2a = encode_a2a(entry.text)
        report.add("mode0", f"{entry.name}_tokens", mode0.token_estimate)
        report.add("mode1", f"{entry.name}_tokens", mode1.token_estimate)
        report.add("a2a", f"{entry.name}_tokens", a2a.token_estimate)
        frame_text_ratios.append(mode1.token_estimate / mode0.token_estimate)
        frame_a2a_ratios.append(mode1.token_estimate / a2a.token_estimate)
    _add_mean_std(report, "mode1", "frame_to_text_ratio", frame_text_ratios)
    _add_mean_std(report, "mode1", "frame_to_a2a_ratio", frame_a2a_ratios)
    return report


# --- RQ4: session overhead --------------------------------------------------


@dataclass(frozen=True)
class TranscriptModel:
    """Synthetic multi-round conversation used for the overhead model.

    ``context_resend_tokens_per_round`` is the slice of each prior round a
    stateless caller re-transmits; the default is calibrated so the
    10-round overhead fraction lands at the observed ~39%.
    """

    rounds: int = 10
    per_round_request_tokens: int = 649
    per_round_response_tokens: int = 649
    handshake_tokens: int = 60
    context_resend_tokens_per_round: int = 184

    def __post_init__(self) -> None:
        for name in (
            "rounds",
            "per_round_request_tokens",
            "per_round_response_tokens",
            "handshake_tokens",
            "context_resend_tokens_per_round",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


RQ4_ROUND_COUNTS = (3, 5, 10)


def session_total_tokens(model: TranscriptModel, rounds: int) -> int:
    """Session condition: one handshake, then per-round tokens only."""
    per_round = model.per_round_request_tokens + model.per_round_response_tokens
    return model.handshake_tokens + rounds * per_round


def stateless_total_tokens(model: TranscriptModel, rounds: int) -> int:
    """Stateless condition: round k re-sends context for each prior round."""
    per_round = model.per_round_request_tokens + model.per_round_response_tokens
    resend = model.context_resend_tokens_per_round * rounds * (rounds - 1) // 2
    return rounds * per_round + resend


def run_rq4(model: TranscriptModel, seed: int = DEFAULT_SEED) -> ExperimentReport:
    """Token totals, overhead, and message counts at 3, 5, and 10 rounds."""
    report = ExperimentReport(experiment="rq4", seed=seed)
    for rounds in RQ4_ROUND_COUNTS:
        session_total = session_total_tokens(model, rounds)
        stateless_total = stateless_total_tokens(model, rounds)
        overhead = max(0, stateless_total - session_total)

        report.add("session", f"rounds_{rounds}_total_tokens", session_total)
        report.add("session", f"rounds_{rounds}_overhead_tokens", 0)
        report.add("session", f"rounds_{rounds}_overhead_pct", 0.0)
        report.add("session", f"rounds_{rounds}_messages", rounds + 4)

        report.add("stateless", f"rounds_{rounds}_total_tokens", stateless_total)
        report.add("stateless", f"rounds_{rounds}_overhead_tokens", overhead)
        report.add(
            "stateless",
            f"rounds_{rounds}_overhead_pct",
            round(100.0 * overhead / stateless_total, 4),
        )
        report.add("stateless", f"rounds_{rounds}_messages", 2 * rounds)
    return report


# --- RQ5: security ----------------------------------------------------------

RQ5_MALICIOUS_PER_KIND = 25
RQ5_BENIGN_PER_KIND = 5
RQ5_REVOKED_TOKEN_COUNT = 6

_KIND_ORDER = (
    AttackKind.UNTRUSTED_DOMAIN_JOIN,
    AttackKind.CAPABILITY_ESCALATION,
    AttackKind.REPLAY_ATTACK,
    AttackKind.CROSS_DOMAIN_ACCESS,
)


def _member_card(delegate_id: str, domain: str = "research.internal") -> DelegateIdentityCard:
    from ldp.identity import CapabilityEntry

    return DelegateIdentityCard(
        delegate_id=delegate_id,
        principal_id="org:research-lab",
        model_family="qwen",
        model_name="qwen3",
        model_version="8b-2026.01",
        runtime_version="ollama-0.6.1",
        trust_domain=domain,
        context_window=32768,
        modalities_supported=("text",),
        languages_supported=("en",),
        capabilities=(CapabilityEntry("reasoning", 0.85, 5000, "medium"),),
        reasoning_profile="deep-analytical",
        cost_profile="medium",
    )


def default_rq5_policy() -> TrustDomainPolicy:
    return TrustDomainPolicy(
        domain="research.internal",
        member_delegates=frozenset({"qwen3:8b", "qwen2.5-coder:7b", "llama3.2:3b"}),
        allowed_peer_domains=frozenset({"partner.lab"}),
        capability_scopes={
            "qwen3:8b": frozenset({"reasoning", "analysis", "classification"}),
            "qwen2.5-coder:7b": frozenset({"code", "extraction"}),
            "llama3.2:3b": frozenset({"classification", "extraction"}),
        },
    )


def _signed_probe_envelope(sender: str, nonces: NonceSource, key: KeyMaterial, clock_ms: int):
    envelope = new_envelope(
        MessageType.TASK_SUBMIT,
        sender_id=sender,
        body={"mode": 0, "content": "probe"},
        session_id=None,
        nonces=nonces,
        clock=lambda: clock_ms,
    )
    return sign_envelope(envelope, key)


def build_rq5_scenarios(
    seed: int = DEFAULT_SEED, include_insiders: bool = True
) -> tuple[list[AttackScenario], set[str]]:
    """The security scenario mix: 100 attack injections plus 20 benign controls.

    Each attack kind contributes 25 injections; the first of each kind is
    an insider variant whose protocol-visible fields are all legitimate
    (member identity, in-scope capability, fresh nonce, same domain), so
    no field-level check can fire on it. Six non-insider injections carry
    revoked bearer tokens, which is all the bearer baseline can catch.
    """
    nonces = NonceSource(seed)
    key = KeyMaterial.generate(seed)
    base_ms = 1_700_000_000_000
    members = ("qwen3:8b", "qwen2.5-coder:7b", "llama3.2:3b")

    scenarios: list[AttackScenario] = []
    token_index = 0

    def next_token() -> str:
        nonlocal token_index
        token = f"token-{token_index:03d}"
        token_index += 1
        return token

    for kind in _KIND_ORDER:
        for j in range(RQ5_MALICIOUS_PER_KIND):
            insider = j == 0
            if insider and not include_insiders:
                continue
            member = members[j % len(members)]
            if kind is AttackKind.UNTRUSTED_DOMAIN_JOIN:
                card = (
                    _member_card(member)
                    if insider
                    else _member_card(f"intruder-{j:02d}", domain=f"external.unknown-{j:02d}")
                )
                action: Any = JoinAction(card=card)
                actor = card
            elif kind is AttackKind.CAPABILITY_ESCALATION:
                actor = _member_card(member)
                claimed = ("reasoning",) if insider else ("classification", f"code-execution-{j:02d}")
                action = ClaimAction(delegate_id=member, claimed=claimed)
            elif kind is AttackKind.REPLAY_ATTACK:
                actor = _member_card(member)
                envelope = _signed_probe_envelope(member, nonces, key, base_ms)
                action = EnvelopeAction(envelope=envelope, previously_seen=not insider)
            else:
                actor = _member_card(member)
                caller_domain = "research.internal" if insider else f"external.dom-{j:02d}"
                action = InvokeAction(
                    caller_domain=caller_domain,
                    target_delegate=member,
                    target_domain="research.internal",
                )
            scenarios.append(
                AttackScenario(
                    kind=kind,
                    actor_card=actor,
                    action=action,
                    ground_truth_malicious=True,
                    bearer_token=next_token(),
                )
            )

    for kind in _KIND_ORDER:
        for j in range(RQ5_BENIGN_PER_KIND):
            member = members[j % len(members)]
            actor = _member_card(member)
            if kind is AttackKind.UNTRUSTED_DOMAIN_JOIN:
                card = actor if j % 2 == 0 else _member_card(f"peer-{j}", domain="partner.lab")
                action = JoinAction(card=card)
                actor = card
            elif kind is AttackKind.CAPABILITY_ESCALATION:
                scope_skill = {"qwen3:8b": "reasoning", "qwen2.5-coder:7b": "code", "llama3.2:3b": "classification"}
                action = ClaimAction(delegate_id=member, claimed=(scope_skill[member],))
            elif kind is AttackKind.REPLAY_ATTACK:
                envelope = _signed_probe_envelope(member, nonces, key, base_ms)
                action = EnvelopeAction(envelope=envelope, previously_seen=False)
            else:
                caller = "research.internal" if j % 2 == 0 else "partner.lab"
                action = InvokeAction(
                    caller_domain=caller,
                    target_delegate=member,
                    target_domain="research.internal",
                )
            scenarios.append(
                AttackScenario(
                    kind=kind,
                    actor_card=actor,
                    action=action,
                    ground_truth_malicious=False,
                    bearer_token=next_token(),
                )
            )

    # Revoke the tokens of six detectable injections (never the insiders,
    # whose per-kind offset is zero).
    revoked_offsets = (1, 2, 26, 27, 51, 76)
    revoked = {f"token-{offset:03d}" for offset in revoked_offsets}
    return scenarios, revoked


def run_rq5(
    policy: TrustDomainPolicy | None = None,
    seed: int = DEFAULT_SEED,
    include_insiders: bool = True,
) -> ExperimentReport:
    """Evaluate the scenario mix under trust-domain checks and the bearer baseline."""
    active_policy = policy if policy is not None else default_rq5_policy()
    scenarios, revoked = build_rq5_scenarios(seed=seed, include_insiders=include_insiders)
    report = ExperimentReport(experiment="rq5", seed=seed)

    counts = {
        "ldp": {"detected": 0, "false_positives": 0},
        "bearer": {"detected": 0, "false_positives": 0},
    }
    malicious_total = sum(1 for s in scenarios if s.ground_truth_malicious)
    benign_total = len(scenarios) - malicious_total

    for index, scenario in enumerate(scenarios):
        # Fresh store per scenario: replay history is scenario-local.
        ldp_outcome = evaluate_scenario(active_policy, scenario, store=NonceStore(clock=lambda: 1_700_000_000_000))
        bearer_outcome = a2a_bearer_check(scenario.bearer_token, revoked).with_ground_truth(
            scenario.ground_truth_malicious
        )
        for condition, outcome in (("ldp", ldp_outcome), ("bearer", bearer_outcome)):
            report.add(condition, f"scenario_{index:03d}_detected", int(outcome.detected))
            if outcome.detected and scenario.ground_truth_malicious:
                counts[condition]["detected"] += 1
            if outcome.false_positive:
                counts[condition]["false_positives"] += 1
        report.add("mix", f"scenario_{index:03d}_kind", scenario.kind.value)
        report.add(
            "mix", f"scenario_{index:03d}_malicious", int(scenario.ground_truth_malicious)
        )

    for condition in ("ldp", "bearer"):
        detected = counts[condition]["detected"]
        fps = counts[condition]["false_positives"]
        report.add_aggregate(condition, "malicious_scenarios", malicious_total)
        report.add_aggregate(condition, "benign_scenarios", benign_total)
        report.add_aggregate(condition, "detected_count", detected)
        report.add_aggregate(condition, "detection_rate", detected / malicious_total)
        report.add_aggregate(condition, "false_positive_count", fps)
        report.add_aggregate(condition, "false_positive_rate", fps / benign_total)
    return report


# --- RQ6: fallback ----------------------------------------------------------


@dataclass(frozen=True)
class FallbackScenario:
    failure: FailureType
    starting_mode: PayloadMode
    protocol: str = "ldp"
    seed: int = DEFAULT_SEED


_RQ6_START_MODES = {
    FailureType.SCHEMA_MISMATCH: PayloadMode.SEMANTIC_FRAME,
    FailureType.CODEC_INCOMPATIBILITY: PayloadMode.EMBEDDING_HINTS,
    FailureType.VERSION_MISMATCH: PayloadMode.SEMANTIC_FRAME,
    FailureType.TIMEOUT_DEGRADATION: PayloadMode.SEMANTIC_FRAME,
}

#: Chance a failure of each type happens to succeed anyway without fallback.
A2A_TERMINAL_SUCCESS_P = {
    FailureType.SCHEMA_MISMATCH: 0.33,
    FailureType.CODEC_INCOMPATIBILITY: 0.0,
    FailureType.VERSION_MISMATCH: 0.50,
    FailureType.TIMEOUT_DEGRADATION: 0.0,
}


def default_rq6_scenarios(seed: int = DEFAULT_SEED) -> list[FallbackScenario]:
    """40 failures: 10 per type, each starting at its characteristic mode."""
    scenarios: list[FallbackScenario] = []
    for failure in FailureType:
        for _ in range(10):
            scenarios.append(
                FallbackScenario(
                    failure=failure, starting_mode=_RQ6_START_MODES[failure], seed=seed
                )
            )
    return scenarios


@dataclass(frozen=True)
class FallbackOutcome:
    completed: bool
    final_mode: PayloadMode
    steps: int
    recovery_ms: int
    quality_degradation: float


def simulate_ldp_fallback(scenario: FallbackScenario) -> FallbackOutcome:
    """Walk one fallback step: the next mode down accepts the exchange.

    A failure at TEXT is retried in place (there is no richer encoding to
    lose), so the chain always terminates with a completed task.
    """
    mode = scenario.starting_mode
    next_mode = fallback_next(mode)
    if next_mode is None:
        return FallbackOutcome(
            completed=True, final_mode=mode, steps=0, recovery_ms=0, quality_degradation=0.0
        )
    return FallbackOutcome(
        completed=True,
        final_mode=next_mode,
        steps=1,
        recovery_ms=RECOVERY_LATENCY_MS[scenario.failure],
        quality_degradation=QUALITY_DEGRADATION_PER_STEP,
    )


def simulate_a2a_failure(scenario: FallbackScenario, rng: random.Random) -> FallbackOutcome:
    """No fallback: the failure is terminal unless it happens to succeed."""
    completed = rng.random() < A2A_TERMINAL_SUCCESS_P[scenario.failure]
    return FallbackOutcome(
        completed=completed,
        final_mode=scenario.starting_mode,
        steps=0,
        recovery_ms=0,
        quality_degradation=0.0 if completed else 1.0,
    )


def a2a_completion_frequency(failure: FailureType, trials: int, seed: int = DEFAULT_SEED) -> float:
    """Observed completion fraction over seeded terminal-rule trials."""
    rng = random.Random(seed)
    scenario = FallbackScenario(failure=failure, starting_mode=_RQ6_START_MODES[failure])
    completed = sum(simulate_a2a_failure(scenario, rng).completed for _ in range(trials))
    return completed / trials


def run_rq6(
    scenarios: list[FallbackScenario] | None = None, seed: int = DEFAULT_SEED
) -> ExperimentReport:
    """Fallback-chain vs terminal-failure handling over the scenario mix."""
    mix = scenarios if scenarios is not None else default_rq6_scenarios(seed)
    report = ExperimentReport(experiment="rq6", seed=seed)
    rng = random.Random(seed)

    results: dict[str, list[FallbackOutcome]] = {"ldp": [], "a2a": []}
    for index, scenario in enumerate(mix):
        ldp_outcome = simulate_ldp_fallback(scenario)
        a2a_outcome = simulate_a2a_failure(scenario, rng)
        results["ldp"].append(ldp_outcome)
        results["a2a"].append(a2a_outcome)
        for condition, outcome in (("ldp", ldp_outcome), ("a2a", a2a_outcome)):
            report.add(condition, f"scenario_{index:02d}_failure", scenario.failure.value)
            report.add(condition, f"scenario_{index:02d}_completed", int(outcome.completed))
            report.add(condition, f"scenario_{index:02d}_recovery_ms", outcome.recovery_ms)
            report.add(
                condition, f"scenario_{index:02d}_degradation", outcome.quality_degradation
            )
            report.add(condition, f"scenario_{index:02d}_final_mode", int(outcome.final_mode))

    for condition, outcomes in results.items():
        completion = sum(o.completed for o in outcomes) / len(outcomes)
        report.add_aggregate(condition, "completion_rate", completion)
        _add_mean_std(report, condition, "recovery_ms", [float(o.recovery_ms) for o in outcomes])
        _add_mean_std(
            report, condition, "quality_degradation", [o.quality_degradation for o in outcomes]
        )
    return report
