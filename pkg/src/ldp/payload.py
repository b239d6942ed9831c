"""Payload modes, encoders, token estimation, negotiation, and fallback.

Six payload modes form a lattice ordered by efficiency, from plain text
(mode 0, universally supported) up to cache slices (mode 5). Encoders
exist for text, semantic frames (mode 1), and the service-envelope JSON
baseline; modes 2-5 are representable ordinals only and refuse to encode.
Mode negotiation picks the richest mutually supported mode, and the
fallback chain steps one mode down at a time until it reaches text.

Token counts use a deterministic word-based model: whitespace tokens that
contain any non-structural character count as words, tokens made up purely
of structural characters (``{}[]":,``) count per character, and the
estimate is ``ceil(1.3 * words) + structural``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import IntEnum

from ldp.errors import UnsupportedModeError, ValidationError


class PayloadMode(IntEnum):
    """Payload formats ordered by efficiency; TEXT is the guaranteed floor."""

    TEXT = 0
    SEMANTIC_FRAME = 1
    EMBEDDING_HINTS = 2
    SEMANTIC_GRAPHS = 3
    LATENT_CAPSULES = 4
    CACHE_SLICES = 5

    @property
    def wire_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_wire_name(cls, name: str) -> "PayloadMode":
        try:
            return cls[name.upper()]
        except KeyError as exc:
            raise ValueError(f"unknown payload mode {name!r}") from exc


#: Modes with a working encoder in this implementation.
ENCODABLE_MODES = frozenset({PayloadMode.TEXT, PayloadMode.SEMANTIC_FRAME})

STRUCTURAL_CHARS = frozenset('{}[]":,')

_FRAME_REQUIRED_FIELDS = ("task_type", "instruction", "input", "expected_output_format")


@dataclass(frozen=True)
class SemanticFrame:
    """Typed task representation: what to do, on what, in what shape."""

    task_type: str
    instruction: str
    input: str
    expected_output_format: str
    labels: tuple[str, ...] | None = None


@dataclass(frozen=True)
class EncodedPayload:
    """Serialized task content tagged with its mode and token estimate."""

    mode: PayloadMode
    data: bytes
    token_estimate: int
    # Plain-text equivalent kept for downgrades along the fallback chain.
    source_text: str = ""

    def text(self) -> str:
        return self.data.decode("utf-8")


@dataclass(frozen=True)
class ModeSet:
    """Payload modes one party supports; must always include TEXT."""

    modes: frozenset[PayloadMode]

    def __post_init__(self) -> None:
        if PayloadMode.TEXT not in self.modes:
            raise ValidationError("mode set must contain TEXT (mode 0)")

    @classmethod
    def of(cls, *modes: PayloadMode | int) -> "ModeSet":
        return cls(frozenset(PayloadMode(m) for m in modes))

    def __contains__(self, mode: PayloadMode) -> bool:
        return mode in self.modes

    def ordinals(self) -> list[int]:
        return sorted(int(m) for m in self.modes)


def estimate_tokens(content: bytes | str) -> int:
    """Deterministic token estimate of UTF-8 text.

    Integer arithmetic avoids float-rounding drift in the 1.3x word
    multiplier.
    """
    if isinstance(content, bytes):
        text = content.decode("utf-8")
    else:
        text = content
    words = 0
    structural = 0
    for token in text.split():
        if all(ch in STRUCTURAL_CHARS for ch in token):
            structural += len(token)
        else:
            words += 1
    return (13 * words + 9) // 10 + structural


def encode_mode0(task_text: str) -> EncodedPayload:
    """Mode 0: the raw task text."""
    data = task_text.encode("utf-8")
    return EncodedPayload(
        mode=PayloadMode.TEXT,
        data=data,
        token_estimate=estimate_tokens(task_text),
        source_text=task_text,
    )


def frame_to_text(frame: SemanticFrame) -> str:
    """Render a frame as plain text for mode-0 fallback."""
    parts = [f"{frame.instruction}."]
    if frame.input:
        parts.append(f"Input: {frame.input}")
    if frame.labels:
        parts.append(f"Choose one of: {', '.join(frame.labels)}.")
    parts.append(f"Respond as {frame.expected_output_format}.")
    return " ".join(parts)


def _frame_bytes(frame: SemanticFrame) -> bytes:
    # Canonical serialization: fixed field order, one field per line,
    # labels inline. Stable bytes make golden tests possible.
    lines = ["{"]
    lines.append(f'  "task_type": {json.dumps(frame.task_type, ensure_ascii=False)},')
    lines.append(f'  "instruction": {json.dumps(frame.instruction, ensure_ascii=False)},')
    lines.append(f'  "input": {json.dumps(frame.input, ensure_ascii=False)},')
    tail = "," if frame.labels is not None else ""
    lines.append(
        f'  "expected_output_format": {json.dumps(frame.expected_output_format, ensure_ascii=False)}{tail}'
    )
    if frame.labels is not None:
        rendered = ", ".join(json.dumps(label, ensure_ascii=False) for label in frame.labels)
        lines.append(f'  "labels": [{rendered}]')
    lines.append("}")
    return "\n".join(lines).encode("utf-8")


def encode_mode1(frame: SemanticFrame) -> EncodedPayload:
    """Mode 1: the typed semantic-frame JSON object."""
    if not frame.task_type:
        raise ValidationError("semantic frame requires a non-empty task_type")
    if not frame.instruction:
        raise ValidationError("semantic frame requires a non-empty instruction")
    data = _frame_bytes(frame)
    return EncodedPayload(
        mode=PayloadMode.SEMANTIC_FRAME,
        data=data,
        token_estimate=estimate_tokens(data),
        source_text=frame_to_text(frame),
    )


def encode_a2a(task_text: str) -> EncodedPayload:
    """Baseline: the raw text wrapped in a service JSON envelope.

    Uses the ``task.message.role`` / ``parts[].text`` shape. Tagged TEXT
    because the content is still plain text underneath.
    """
    envelope = {"task": {"message": {"role": "user", "parts": [{"text": task_text}]}}}
    data = json.dumps(envelope, indent=2, ensure_ascii=False).encode("utf-8")
    return EncodedPayload(
        mode=PayloadMode.TEXT,
        data=data,
        token_estimate=estimate_tokens(data),
        source_text=task_text,
    )


def encode_at_mode(mode: PayloadMode, text: str, frame: SemanticFrame | None = None) -> EncodedPayload:
    """Encode task content at a specific mode.

    Modes 2-5 have no encoder and raise :class:`UnsupportedModeError`.
    """
    if mode == PayloadMode.TEXT:
        return encode_mode0(text)
    if mode == PayloadMode.SEMANTIC_FRAME:
        if frame is None:
            raise ValidationError("semantic-frame encoding requires a frame")
        return encode_mode1(frame)
    raise UnsupportedModeError(f"no encoder for payload mode {mode.name} ({int(mode)})")


def negotiate_mode(caller: ModeSet, callee: ModeSet) -> PayloadMode:
    """Richest mutually supported mode; TEXT guarantees a non-empty meet."""
    common = caller.modes & callee.modes
    return max(common)


def fallback_next(mode: PayloadMode) -> PayloadMode | None:
    """One step down the fallback chain; None once TEXT is reached."""
    if mode == PayloadMode.TEXT:
        return None
    return PayloadMode(int(mode) - 1)


def validate_frame_schema(data: bytes) -> bool:
    """True iff the bytes parse as a semantic frame with all required fields.

    Failures return False; they trigger fallback, not crashes.
    """
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return False
    if not isinstance(raw, dict):
        return False
    for name in _FRAME_REQUIRED_FIELDS:
        if not isinstance(raw.get(name), str):
            return False
    if not raw["task_type"] or not raw["instruction"]:
        return False
    labels = raw.get("labels")
    if labels is not None:
        if not isinstance(labels, list) or not all(isinstance(v, str) for v in labels):
            return False
    return True


def parse_frame(data: bytes) -> SemanticFrame:
    """Parse frame bytes; assumes :func:`validate_frame_schema` passed."""
    raw = json.loads(data.decode("utf-8"))
    labels = raw.get("labels")
    return SemanticFrame(
        task_type=raw["task_type"],
        instruction=raw["instruction"],
        input=raw["input"],
        expected_output_format=raw["expected_output_format"],
        labels=tuple(labels) if labels is not None else None,
    )
