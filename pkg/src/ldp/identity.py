"""Delegate identity cards: validation, JSON form, and label-map flattening.

A card describes one delegate: who it is (core identity), what trust
boundary it belongs to, what it can do (capabilities with quality, latency,
and cost hints), and how it behaves. Cards round-trip between three forms:
the dataclass, the card JSON file format, and a flat ``ldp.*`` label map
suitable for systems that only store string-to-string metadata.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

from ldp.errors import LabelParseError, ValidationError

COST_LEVELS = ("low", "medium", "high")

LABEL_PREFIX = "ldp."

# Fields that may be absent from a card; everything else is required.
_OPTIONAL_STRING_FIELDS = (
    "weights_fingerprint",
    "endpoint_address",
    "jurisdiction",
    "data_handling_policy",
    "tokenizer_fingerprint",
)


@dataclass(frozen=True)
class CapabilityEntry:
    """One advertised skill with routing hints."""

    name: str
    quality_hint: float
    latency_hint_ms_p50: int
    cost_hint: str


@dataclass(frozen=True)
class DelegateIdentityCard:
    """AI-native identity record for a delegate."""

    # Core identity
    delegate_id: str
    principal_id: str
    model_family: str
    model_name: str
    model_version: str
    runtime_version: str
    # Trust & security
    trust_domain: str
    # Capabilities
    context_window: int
    modalities_supported: tuple[str, ...]
    languages_supported: tuple[str, ...]
    capabilities: tuple[CapabilityEntry, ...]
    # Behavioral
    reasoning_profile: str
    cost_profile: str
    # Optional
    public_key: bytes | None = None
    weights_fingerprint: str | None = None
    endpoint_address: str | None = None
    jurisdiction: str | None = None
    data_handling_policy: str | None = None
    tokenizer_fingerprint: str | None = None

    def capability(self, name: str) -> CapabilityEntry | None:
        for entry in self.capabilities:
            if entry.name == name:
                return entry
        return None

    def capability_names(self) -> tuple[str, ...]:
        return tuple(entry.name for entry in self.capabilities)


def validate_card(card: DelegateIdentityCard) -> list[str]:
    """Check every card invariant.

    Returns an empty list for a valid card; otherwise one entry per
    violated field, formatted ``<field>: <reason>``.
    """
    report: list[str] = []
    if not card.delegate_id:
        report.append("delegate_id: must be non-empty")
    if not card.model_family:
        report.append("model_family: must be non-empty")
    if not card.trust_domain:
        report.append("trust_domain: must be non-empty")
    if card.context_window <= 0:
        report.append("context_window: must be positive")
    if not card.capabilities:
        report.append("capabilities: must be non-empty")
    if card.cost_profile not in COST_LEVELS:
        report.append(f"cost_profile: must be one of {'/'.join(COST_LEVELS)}")

    seen: set[str] = set()
    for i, entry in enumerate(card.capabilities):
        prefix = f"capabilities[{i}]"
        if not entry.name:
            report.append(f"{prefix}.name: must be non-empty")
        elif entry.name in seen:
            report.append(f"{prefix}.name: duplicate capability {entry.name!r}")
        seen.add(entry.name)
        if not 0.0 <= entry.quality_hint <= 1.0:
            report.append(f"{prefix}.quality_hint: must be within [0, 1]")
        if entry.latency_hint_ms_p50 <= 0:
            report.append(f"{prefix}.latency_hint_ms_p50: must be positive")
        if entry.cost_hint not in COST_LEVELS:
            report.append(f"{prefix}.cost_hint: must be one of {'/'.join(COST_LEVELS)}")

    # Comma-joined label encoding cannot represent values containing commas.
    for list_field in ("modalities_supported", "languages_supported"):
        for value in getattr(card, list_field):
            if "," in value:
                report.append(f"{list_field}: value {value!r} must not contain a comma")

    return report


def _require_valid(card: DelegateIdentityCard) -> None:
    report = validate_card(card)
    if report:
        raise ValidationError(f"invalid identity card ({len(report)} violations)", report=report)


def _format_quality(value: float) -> str:
    # Fixed 4-decimal formatting keeps the label round-trip exact.
    return f"{value:.4f}"


def flatten_to_labels(card: DelegateIdentityCard) -> dict[str, str]:
    """Flatten a valid card into an ordered ``ldp.*`` label map.

    Scalars map to ``ldp.<field>``, capability ``i`` to
    ``ldp.capability.<i>.<subfield>``, lists join with commas. Optional
    fields that are unset produce no key.
    """
    _require_valid(card)
    labels: dict[str, str] = {}
    labels[LABEL_PREFIX + "delegate_id"] = card.delegate_id
    labels[LABEL_PREFIX + "principal_id"] = card.principal_id
    labels[LABEL_PREFIX + "model_family"] = card.model_family
    labels[LABEL_PREFIX + "model_name"] = card.model_name
    labels[LABEL_PREFIX + "model_version"] = card.model_version
    labels[LABEL_PREFIX + "runtime_version"] = card.runtime_version
    labels[LABEL_PREFIX + "trust_domain"] = card.trust_domain
    if card.public_key is not None:
        labels[LABEL_PREFIX + "public_key"] = card.public_key.hex()
    for name in _OPTIONAL_STRING_FIELDS:
        value = getattr(card, name)
        if value is not None:
            labels[LABEL_PREFIX + name] = value
    labels[LABEL_PREFIX + "context_window"] = str(card.context_window)
    labels[LABEL_PREFIX + "modalities_supported"] = ",".join(card.modalities_supported)
    labels[LABEL_PREFIX + "languages_supported"] = ",".join(card.languages_supported)
    for i, entry in enumerate(card.capabilities):
        base = f"{LABEL_PREFIX}capability.{i}."
        labels[base + "name"] = entry.name
        labels[base + "quality_hint"] = _format_quality(entry.quality_hint)
        labels[base + "latency_hint_ms_p50"] = str(entry.latency_hint_ms_p50)
        labels[base + "cost_hint"] = entry.cost_hint
    labels[LABEL_PREFIX + "reasoning_profile"] = card.reasoning_profile
    labels[LABEL_PREFIX + "cost_profile"] = card.cost_profile
    return labels


def _label(labels: dict[str, str], key: str) -> str:
    full = LABEL_PREFIX + key
    if full not in labels:
        raise LabelParseError(f"missing required label {full!r}")
    return labels[full]


def _label_int(labels: dict[str, str], key: str) -> int:
    raw = _label(labels, key)
    try:
        return int(raw)
    except ValueError as exc:
        raise LabelParseError(f"label {LABEL_PREFIX + key!r} is not an integer: {raw!r}") from exc


def _split_list(raw: str) -> tuple[str, ...]:
    return tuple(part for part in raw.split(",") if part != "")


def parse_from_labels(labels: dict[str, str]) -> DelegateIdentityCard:
    """Rebuild a card from its label map; inverse of :func:`flatten_to_labels`."""
    capabilities: list[CapabilityEntry] = []
    index = 0
    while f"{LABEL_PREFIX}capability.{index}.name" in labels:
        base = f"capability.{index}."
        raw_quality = _label(labels, base + "quality_hint")
        try:
            quality = float(raw_quality)
        except ValueError as exc:
            raise LabelParseError(
                f"label {LABEL_PREFIX + base + 'quality_hint'!r} is not a number: {raw_quality!r}"
            ) from exc
        capabilities.append(
            CapabilityEntry(
                name=_label(labels, base + "name"),
                quality_hint=quality,
                latency_hint_ms_p50=_label_int(labels, base + "latency_hint_ms_p50"),
                cost_hint=_label(labels, base + "cost_hint"),
            )
        )
        index += 1
    if not capabilities:
        raise LabelParseError(f"missing required label {LABEL_PREFIX}capability.0.name")

    public_key: bytes | None = None
    if LABEL_PREFIX + "public_key" in labels:
        raw_key = labels[LABEL_PREFIX + "public_key"]
        try:
            public_key = bytes.fromhex(raw_key)
        except ValueError as exc:
            raise LabelParseError(f"label {LABEL_PREFIX}public_key is not hex: {raw_key!r}") from exc

    optional = {
        name: labels.get(LABEL_PREFIX + name) for name in _OPTIONAL_STRING_FIELDS
    }

    card = DelegateIdentityCard(
        delegate_id=_label(labels, "delegate_id"),
        principal_id=_label(labels, "principal_id"),
        model_family=_label(labels, "model_family"),
        model_name=_label(labels, "model_name"),
        model_version=_label(labels, "model_version"),
        runtime_version=_label(labels, "runtime_version"),
        trust_domain=_label(labels, "trust_domain"),
        context_window=_label_int(labels, "context_window"),
        modalities_supported=_split_list(_label(labels, "modalities_supported")),
        languages_supported=_split_list(_label(labels, "languages_supported")),
        capabilities=tuple(capabilities),
        reasoning_profile=_label(labels, "reasoning_profile"),
        cost_profile=_label(labels, "cost_profile"),
        public_key=public_key,
        **optional,
    )
    report = validate_card(card)
    if report:
        raise LabelParseError(f"labels decode to an invalid card: {'; '.join(report)}")
    return card


def card_to_dict(card: DelegateIdentityCard) -> dict[str, Any]:
    """Card JSON object (the identity card file format)."""
    out: dict[str, Any] = {
        "delegate_id": card.delegate_id,
        "principal_id": card.principal_id,
        "model_family": card.model_family,
        "model_name": card.model_name,
        "model_version": card.model_version,
        "runtime_version": card.runtime_version,
        "trust_domain": card.trust_domain,
        "capabilities": [
            {
                "name": entry.name,
                "quality_hint": entry.quality_hint,
                "latency_hint_ms_p50": entry.latency_hint_ms_p50,
                "cost_hint": entry.cost_hint,
            }
            for entry in card.capabilities
        ],
        "reasoning_profile": card.reasoning_profile,
        "cost_profile": card.cost_profile,
        "context_window": card.context_window,
        "modalities_supported": list(card.modalities_supported),
        "languages_supported": list(card.languages_supported),
    }
    if card.public_key is not None:
        out["public_key"] = card.public_key.hex()
    for name in _OPTIONAL_STRING_FIELDS:
        value = getattr(card, name)
        if value is not None:
            out[name] = value
    return out


_REQUIRED_STRING_FIELDS = (
    "delegate_id",
    "principal_id",
    "model_family",
    "model_name",
    "model_version",
    "runtime_version",
    "trust_domain",
    "reasoning_profile",
    "cost_profile",
)


def card_from_dict(data: dict[str, Any]) -> DelegateIdentityCard:
    """Parse the card JSON object form.

    Structural problems (missing or mistyped fields) raise
    :class:`ValidationError` with one report line per problem.
    """
    report: list[str] = []

    strings: dict[str, str] = {}
    for name in _REQUIRED_STRING_FIELDS:
        value = data.get(name)
        if not isinstance(value, str):
            report.append(f"{name}: required string field missing or mistyped")
            value = ""
        strings[name] = value

    lists: dict[str, tuple[str, ...]] = {}
    for name in ("modalities_supported", "languages_supported"):
        value = data.get(name)
        if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
            report.append(f"{name}: required list of strings missing or mistyped")
            lists[name] = ()
        else:
            lists[name] = tuple(value)

    context_window = data.get("context_window")
    if not isinstance(context_window, int) or isinstance(context_window, bool):
        report.append("context_window: required integer field missing or mistyped")
        context_window = 0

    capabilities: list[CapabilityEntry] = []
    raw_caps = data.get("capabilities")
    if not isinstance(raw_caps, list):
        report.append("capabilities: required list missing or mistyped")
        raw_caps = []
    for i, raw in enumerate(raw_caps):
        if not isinstance(raw, dict):
            report.append(f"capabilities[{i}]: must be an object")
            continue
        name = raw.get("name")
        quality = raw.get("quality_hint")
        latency = raw.get("latency_hint_ms_p50")
        cost = raw.get("cost_hint")
        if not isinstance(name, str):
            report.append(f"capabilities[{i}].name: must be a string")
            continue
        if not isinstance(quality, (int, float)) or isinstance(quality, bool):
            report.append(f"capabilities[{i}].quality_hint: must be a number")
            continue
        if not isinstance(latency, int) or isinstance(latency, bool):
            report.append(f"capabilities[{i}].latency_hint_ms_p50: must be an integer")
            continue
        if not isinstance(cost, str):
            report.append(f"capabilities[{i}].cost_hint: must be a string")
            continue
        capabilities.append(
            CapabilityEntry(
                name=name,
                quality_hint=float(quality),
                latency_hint_ms_p50=latency,
                cost_hint=cost,
            )
        )

    public_key: bytes | None = None
    if "public_key" in data:
        raw_key = data["public_key"]
        if not isinstance(raw_key, str):
            report.append("public_key: must be a hex string")
        else:
            try:
                public_key = bytes.fromhex(raw_key)
            except ValueError:
                report.append("public_key: must be a hex string")

    optional: dict[str, str | None] = {}
    for name in _OPTIONAL_STRING_FIELDS:
        value = data.get(name)
        if value is not None and not isinstance(value, str):
            report.append(f"{name}: must be a string when present")
            value = None
        optional[name] = value

    if report:
        raise ValidationError(f"malformed identity card ({len(report)} problems)", report=report)

    return DelegateIdentityCard(
        delegate_id=strings["delegate_id"],
        principal_id=strings["principal_id"],
        model_family=strings["model_family"],
        model_name=strings["model_name"],
        model_version=strings["model_version"],
        runtime_version=strings["runtime_version"],
        trust_domain=strings["trust_domain"],
        context_window=context_window,
        modalities_supported=lists["modalities_supported"],
        languages_supported=lists["languages_supported"],
        capabilities=tuple(capabilities),
        reasoning_profile=strings["reasoning_profile"],
        cost_profile=strings["cost_profile"],
        public_key=public_key,
        **optional,
    )


def card_to_json(card: DelegateIdentityCard) -> str:
    return json.dumps(card_to_dict(card), indent=2, ensure_ascii=False)


def card_from_json(text: str) -> DelegateIdentityCard:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"card file is not valid JSON: {exc}", report=[f"json: {exc}"]) from exc
    if not isinstance(data, dict):
        raise ValidationError("card file must contain a JSON object", report=["json: not an object"])
    return card_from_dict(data)
