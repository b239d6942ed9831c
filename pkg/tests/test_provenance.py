from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ldp.errors import ValidationError
from ldp.provenance import (
    ProvenanceRecord,
    inject_noise,
    record_from_dict,
    record_to_dict,
    validate_record,
    weight_sources,
)


def record(
    score: float = 0.84,
    method: str = "self-report",
    performed: bool = True,
    status: str = "passed",
    produced_by: str = "delegate:qwen3-8b",
) -> ProvenanceRecord:
    return ProvenanceRecord(
        produced_by=produced_by,
        model_version="qwen3-8b-2026.01",
        payload_mode_used="semantic_frame",
        confidence_score=score,
        confidence_method=method,
        verification_performed=performed,
        verification_status=status,
    )


class TestValidation:
    def test_reference_record_is_valid(self):
        assert validate_record(record()) == []

    def test_status_without_verification(self):
        report = validate_record(record(performed=False, status="passed"))
        assert len(report) == 1
        assert report[0].startswith("verification_status")

    def test_none_status_with_verification(self):
        report = validate_record(record(performed=True, status="none"))
        assert len(report) == 1

    def test_score_out_of_range(self):
        report = validate_record(record(score=1.5))
        assert len(report) == 1
        assert report[0].startswith("confidence_score")

    def test_unknown_method(self):
        assert len(validate_record(record(method="vibes"))) == 1

    def test_wire_form_round_trips(self):
        rec = record()
        data = record_to_dict(rec)
        assert data["confidence"] == {"score": 0.84, "method": "self-report"}
        assert data["verification"] == {"performed": True, "status": "passed"}
        assert record_from_dict(data) == rec

    def test_wire_form_rejects_invalid(self):
        data = record_to_dict(record())
        data["confidence"]["score"] = 2.0
        with pytest.raises(ValidationError):
            record_from_dict(data)


class TestWeightSources:
    def test_single_record_gets_full_weight(self):
        assert weight_sources([record()]) == [1.0]

    def test_two_verified_records(self):
        weights = weight_sources([record(score=0.8), record(score=0.4)])
        assert weights == pytest.approx([2 / 3, 1 / 3])

    def test_unverified_record_capped_at_prior(self):
        # Verified 0.6 vs unverified claiming 0.99: bases 0.6 and 0.5.
        verified = record(score=0.6)
        unverified = record(score=0.99, performed=False, status="none")
        weights = weight_sources([verified, unverified])
        assert weights == pytest.approx([0.6 / 1.1, 0.5 / 1.1])

    def test_failed_verification_also_capped(self):
        failed = record(score=0.95, status="failed")
        verified = record(score=0.6)
        weights = weight_sources([verified, failed])
        assert weights == pytest.approx([0.6 / 1.1, 0.5 / 1.1])

    def test_empty_list_is_an_error(self):
        with pytest.raises(ValueError):
            weight_sources([])

    def test_prior_disabled_trusts_raw_confidence(self):
        unverified = record(score=0.99, performed=False, status="none")
        verified = record(score=0.6)
        weights = weight_sources([verified, unverified], unverified_prior=None)
        assert weights == pytest.approx([0.6 / 1.59, 0.99 / 1.59])

    def test_all_zero_confidence_falls_back_to_uniform(self):
        records = [record(score=0.0), record(score=0.0)]
        assert weight_sources(records, unverified_prior=None) == [0.5, 0.5]

    def test_ties_preserved(self):
        weights = weight_sources([record(score=0.7), record(score=0.7)])
        assert weights[0] == weights[1]


class TestInjectNoise:
    def test_inflates_and_marks_verified(self):
        noised = inject_noise(record(score=0.84))
        assert noised.confidence_score == 0.99
        assert noised.verification_performed is True
        assert noised.verification_status == "passed"

    def test_idempotent_on_already_inflated(self):
        noised = inject_noise(record(score=0.99))
        assert noised == inject_noise(noised)
        assert validate_record(noised) == []

    def test_other_fields_preserved(self):
        original = record()
        noised = inject_noise(original)
        assert noised.payload_mode_used == original.payload_mode_used
        assert noised.produced_by == original.produced_by
        assert noised.confidence_method == original.confidence_method

    def test_output_always_validates(self):
        for performed, status in [(False, "none"), (True, "failed"), (True, "passed")]:
            assert validate_record(inject_noise(record(performed=performed, status=status))) == []


@st.composite
def record_lists(draw):
    def one(_):
        performed = draw(st.booleans())
        status = draw(st.sampled_from(["passed", "failed"])) if performed else "none"
        return record(
            score=draw(st.integers(min_value=0, max_value=100)) / 100,
            performed=performed,
            status=status,
        )

    return [one(i) for i in range(draw(st.integers(min_value=1, max_value=6)))]


class TestWeightProperties:
    @given(record_lists())
    @settings(max_examples=200, deadline=None)
    def test_probability_vector(self, records):
        weights = weight_sources(records)
        assert all(w >= 0 for w in weights)
        assert sum(weights) == pytest.approx(1.0, abs=1e-9)

    @given(record_lists())
    @settings(max_examples=100, deadline=None)
    def test_permutation_equivariance(self, records):
        base = weight_sources(records)
        order = list(range(len(records)))[::-1]
        permuted = weight_sources([records[i] for i in order])
        assert permuted == pytest.approx([base[i] for i in order])

    @given(record_lists())
    @settings(max_examples=100, deadline=None)
    def test_monotone_among_verified(self, records):
        weights = weight_sources(records)
        verified = [
            (rec.confidence_score, w)
            for rec, w in zip(records, weights)
            if rec.is_verified()
        ]
        for (score_a, weight_a), (score_b, weight_b) in itertools.combinations(verified, 2):
            if score_a > score_b:
                assert weight_a >= weight_b
            elif score_b > score_a:
                assert weight_b >= weight_a
