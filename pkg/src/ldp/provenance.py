"""Task-result provenance: confidence, verification status, and weighting.

Every task result carries a provenance record naming the producer, the
payload mode used, a confidence score with its method, and whether the
output was verified. ``weight_sources`` turns a list of records into
normalized synthesis weights; by default an unverified record's influence
is capped at a flat prior so self-reported confidence cannot dominate
verified results. ``inject_noise`` applies the adversarial inflation used
to study that failure mode: confidence pushed to 0.99 and verification
claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Any

from ldp.errors import ValidationError

CONFIDENCE_METHODS = ("self-report", "calibrated", "external")
VERIFICATION_STATUSES = ("passed", "failed", "none")

#: Base weight assigned to records without a passed verification.
UNVERIFIED_PRIOR = 0.5


@dataclass(frozen=True)
class ProvenanceRecord:
    """Provenance metadata attached to one task result."""

    produced_by: str
    model_version: str
    payload_mode_used: str
    confidence_score: float
    confidence_method: str
    verification_performed: bool
    verification_status: str

    def is_verified(self) -> bool:
        return self.verification_performed and self.verification_status == "passed"


def validate_record(rec: ProvenanceRecord) -> list[str]:
    """Empty list iff the record satisfies all invariants."""
    report: list[str] = []
    if not rec.produced_by:
        report.append("produced_by: must be non-empty")
    if not 0.0 <= rec.confidence_score <= 1.0:
        report.append("confidence_score: must be within [0, 1]")
    if rec.confidence_method not in CONFIDENCE_METHODS:
        report.append(f"confidence_method: must be one of {'/'.join(CONFIDENCE_METHODS)}")
    if rec.verification_status not in VERIFICATION_STATUSES:
        report.append(f"verification_status: must be one of {'/'.join(VERIFICATION_STATUSES)}")
    elif rec.verification_performed and rec.verification_status == "none":
        report.append("verification_status: must not be 'none' when verification was performed")
    elif not rec.verification_performed and rec.verification_status != "none":
        report.append("verification_status: must be 'none' when verification was not performed")
    return report


def weight_sources(
    records: list[ProvenanceRecord],
    unverified_prior: float | None = UNVERIFIED_PRIOR,
) -> list[float]:
    """Normalized synthesis weights, one per record, summing to 1.

    A record's base weight is its confidence score when it carries a
    passed verification; otherwise the flat ``unverified_prior``. Passing
    ``unverified_prior=None`` disables the cap and trusts raw confidence
    scores, which is exactly the behavior inflated self-reports exploit.
    """
    if not records:
        raise ValueError("weight_sources requires at least one record")
    bases: list[float] = []
    for rec in records:
        if unverified_prior is None or rec.is_verified():
            bases.append(rec.confidence_score)
        else:
            bases.append(unverified_prior)
    total = sum(bases)
    if total <= 0.0:
        # All-zero confidence: fall back to uniform weights.
        return [1.0 / len(records)] * len(records)
    return [base / total for base in bases]


def inject_noise(rec: ProvenanceRecord) -> ProvenanceRecord:
    """Adversarially inflate a record: confidence 0.99, verification claimed.

    All other fields are unchanged; the output is always a valid record.
    """
    return replace(
        rec,
        confidence_score=0.99,
        verification_performed=True,
        verification_status="passed",
    )


def record_to_dict(rec: ProvenanceRecord) -> dict[str, Any]:
    """Wire form with nested ``confidence`` and ``verification`` objects."""
    return {
        "produced_by": rec.produced_by,
        "model_version": rec.model_version,
        "payload_mode_used": rec.payload_mode_used,
        "confidence": {"score": rec.confidence_score, "method": rec.confidence_method},
        "verification": {"performed": rec.verification_performed, "status": rec.verification_status},
    }


def record_from_dict(data: dict[str, Any]) -> ProvenanceRecord:
    confidence = data.get("confidence")
    verification = data.get("verification")
    if not isinstance(confidence, dict) or not isinstance(verification, dict):
        raise ValidationError("provenance record requires confidence and verification objects")
    try:
        rec = ProvenanceRecord(
            produced_by=data["produced_by"],
            model_version=data["model_version"],
            payload_mode_used=data["payload_mode_used"],
            confidence_score=float(confidence["score"]),
            confidence_method=confidence["method"],
            verification_performed=bool(verification["performed"]),
            verification_status=verification["status"],
        )
    except KeyError as exc:
        raise ValidationError(f"provenance record missing field {exc.args[0]!r}") from exc
    report = validate_record(rec)
    if report:
        raise ValidationError(
            f"invalid provenance record ({len(report)} violations)", report=report
        )
    return rec
