"""Delegate pool registry and the three routing policies.

The identity-aware policy uses card metadata: easy tasks go to the
cheapest capable delegate (latency tie-break), hard tasks to the highest
quality hint, medium tasks to the best quality-per-cost ratio. The
service-baseline policy matches skill names only, in registration order,
ignoring every hint. The random policy draws uniformly under a seeded
generator. A judge-score combiner turns per-dimension ratings into one
overall score.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Any

from ldp.errors import RoutingError, ValidationError
from ldp.identity import CapabilityEntry, DelegateIdentityCard, card_from_dict, validate_card

TASK_DOMAINS = ("classification", "extraction", "reasoning", "analysis", "coding", "math")
DIFFICULTIES = ("easy", "medium", "hard")

WILDCARD_SKILL = "*"

_COST_RANK = {"low": 1, "medium": 2, "high": 3}


@dataclass(frozen=True)
class TaskSpec:
    """One routable task: domain, difficulty, the skill it needs, the prompt."""

    domain: str
    difficulty: str
    required_skill: str
    prompt: str

    def __post_init__(self) -> None:
        if self.domain not in TASK_DOMAINS:
            raise ValidationError(f"unknown task domain {self.domain!r}")
        if self.difficulty not in DIFFICULTIES:
            raise ValidationError(f"unknown task difficulty {self.difficulty!r}")


def task_from_dict(data: dict[str, Any]) -> TaskSpec:
    try:
        return TaskSpec(
            domain=data["domain"],
            difficulty=data["difficulty"],
            required_skill=data["required_skill"],
            prompt=data["prompt"],
        )
    except KeyError as exc:
        raise ValidationError(f"task spec missing field {exc.args[0]!r}") from exc


def task_to_dict(task: TaskSpec) -> dict[str, Any]:
    return {
        "domain": task.domain,
        "difficulty": task.difficulty,
        "required_skill": task.required_skill,
        "prompt": task.prompt,
    }


class DelegatePool:
    """Ordered registry of delegate cards with unique ids."""

    def __init__(self, entries: list[DelegateIdentityCard]):
        seen: set[str] = set()
        for card in entries:
            if card.delegate_id in seen:
                raise ValidationError(f"duplicate delegate_id {card.delegate_id!r} in pool")
            seen.add(card.delegate_id)
            report = validate_card(card)
            if report:
                raise ValidationError(
                    f"invalid card {card.delegate_id!r} in pool", report=report
                )
        self.entries = list(entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, delegate_id: str) -> DelegateIdentityCard | None:
        for card in self.entries:
            if card.delegate_id == delegate_id:
                return card
        return None

    @classmethod
    def from_json(cls, text: str) -> "DelegatePool":
        data = json.loads(text)
        if not isinstance(data, list):
            raise ValidationError("pool file must contain a JSON array of identity cards")
        return cls([card_from_dict(item) for item in data])


@dataclass(frozen=True)
class RoutingDecision:
    chosen: str
    policy: str
    expected_latency_ms: int
    rationale: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "chosen": self.chosen,
            "policy": self.policy,
            "expected_latency_ms": self.expected_latency_ms,
            "rationale": self.rationale,
        }


def _matching_capability(card: DelegateIdentityCard, skill: str) -> CapabilityEntry | None:
    entry = card.capability(skill)
    if entry is not None:
        return entry
    return card.capability(WILDCARD_SKILL)


def route_ldp(pool: DelegatePool, task: TaskSpec) -> RoutingDecision:
    """Metadata-aware routing over quality, cost, and latency hints."""
    candidates: list[tuple[DelegateIdentityCard, CapabilityEntry]] = []
    for card in pool:
        entry = _matching_capability(card, task.required_skill)
        if entry is not None:
            candidates.append((card, entry))
    if not candidates:
        raise RoutingError(f"no delegate advertises skill {task.required_skill!r}")

    def analytical_rank(card: DelegateIdentityCard) -> int:
        return 0 if "analytical" in card.reasoning_profile else 1

    if task.difficulty == "easy":
        card, entry = min(
            candidates,
            key=lambda pair: (
                _COST_RANK[pair[0].cost_profile],
                pair[1].latency_hint_ms_p50,
                pair[0].delegate_id,
            ),
        )
        rationale = (
            f"easy task: minimal cost_profile ({card.cost_profile}), "
            f"latency hint {entry.latency_hint_ms_p50} ms"
        )
    elif task.difficulty == "hard":
        card, entry = min(
            candidates,
            key=lambda pair: (
                -pair[1].quality_hint,
                analytical_rank(pair[0]),
                pair[0].delegate_id,
            ),
        )
        rationale = (
            f"hard task: maximal quality_hint ({entry.quality_hint:.2f}), "
            f"reasoning_profile {card.reasoning_profile!r}"
        )
    else:
        card, entry = min(
            candidates,
            key=lambda pair: (
                -(pair[1].quality_hint / _COST_RANK[pair[0].cost_profile]),
                analytical_rank(pair[0]),
                pair[0].delegate_id,
            ),
        )
        ratio = entry.quality_hint / _COST_RANK[card.cost_profile]
        rationale = (
            f"medium task: best quality_hint/cost ratio ({ratio:.2f}), "
            f"cost_profile {card.cost_profile}"
        )
    return RoutingDecision(
        chosen=card.delegate_id,
        policy="ldp",
        expected_latency_ms=entry.latency_hint_ms_p50,
        rationale=rationale,
    )


def route_a2a(pool: DelegatePool, task: TaskSpec) -> RoutingDecision:
    """Skill-name matching in registration order; ignores all hints."""
    for card in pool:
        if task.required_skill in card.capability_names():
            entry = card.capability(task.required_skill)
            assert entry is not None
            return RoutingDecision(
                chosen=card.delegate_id,
                policy="a2a",
                expected_latency_ms=entry.latency_hint_ms_p50,
                rationale=f"first registered delegate listing skill {task.required_skill!r}",
            )
    raise RoutingError(f"no delegate lists skill {task.required_skill!r}")


def route_random(
    pool: DelegatePool, task: TaskSpec, seed: int | random.Random
) -> RoutingDecision:
    """Uniform selection under a seeded generator.

    Pass a ``random.Random`` to draw a reproducible sequence across calls,
    or an int to get the deterministic first draw of that seed.
    """
    if not len(pool):
        raise RoutingError("pool is empty")
    rng = seed if isinstance(seed, random.Random) else random.Random(seed)
    card = rng.choice(pool.entries)
    entry = _matching_capability(card, task.required_skill)
    latency = entry.latency_hint_ms_p50 if entry is not None else 0
    return RoutingDecision(
        chosen=card.delegate_id,
        policy="random",
        expected_latency_ms=latency,
        rationale="uniform random selection",
    )


@dataclass(frozen=True)
class JudgeScores:
    """Per-dimension judge ratings, each on the 1-10 scale."""

    quality: float
    correctness: float
    completeness: float


def combine_judge_scores(scores: JudgeScores) -> float:
    """Weighted overall score: 0.3 quality + 0.4 correctness + 0.3 completeness.

    Computed as an integer-weighted sum over 10 so integer inputs combine
    without float drift.
    """
    for name in ("quality", "correctness", "completeness"):
        value = getattr(scores, name)
        if not 1.0 <= value <= 10.0:
            raise ValueError(f"{name} must be within [1, 10], got {value}")
    return (3 * scores.quality + 4 * scores.correctness + 3 * scores.completeness) / 10
