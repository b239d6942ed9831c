from __future__ import annotations

import pytest

from ldp.delegates import FailureType
from ldp.experiments import (
    ExperimentReport,
    FallbackScenario,
    TranscriptModel,
    a2a_completion_frequency,
    build_rq5_scenarios,
    default_rq1_tasks,
    default_rq2_corpus,
    default_rq6_scenarios,
    report_from_json,
    report_to_csv,
    report_to_json,
    run_rq1,
    run_rq2,
    run_rq4,
    run_rq5,
    run_rq6,
    session_total_tokens,
    stateless_total_tokens,
    write_report,
)
from ldp.payload import PayloadMode


class TestRq1:
    def test_easy_tasks_all_route_to_lightweight_delegate(self, pool):
        report = run_rq1(pool, default_rq1_tasks())
        chosen = [
            row.value
            for row in report.run_rows()
            if row.condition == "ldp/easy" and row.metric.endswith("_chosen")
        ]
        assert len(chosen) == 10
        assert set(chosen) == {"llama3.2:3b"}
        assert report.value("ldp/easy", "mean_expected_latency_ms") == 1000.0

    def test_hard_tasks_all_route_to_quality_delegate(self, pool):
        report = run_rq1(pool, default_rq1_tasks())
        chosen = [
            row.value
            for row in report.run_rows()
            if row.condition == "ldp/hard" and row.metric.endswith("_chosen")
        ]
        assert len(chosen) == 10
        assert set(chosen) == {"qwen3:8b"}

    def test_skill_matching_easy_latency_at_least_4x(self, pool):
        report = run_rq1(pool, default_rq1_tasks())
        ldp = float(report.value("ldp/easy", "mean_expected_latency_ms"))
        a2a = float(report.value("a2a/easy", "mean_expected_latency_ms"))
        assert a2a >= 4 * ldp

    def test_random_policy_reproducible(self, pool):
        tasks = default_rq1_tasks()
        first = run_rq1(pool, tasks, seed=7)
        second = run_rq1(pool, tasks, seed=7)
        assert first.rows == second.rows

    def test_routing_errors_recorded_not_raised(self, pool):
        from ldp.routing import TaskSpec

        weird = [TaskSpec("math", "easy", "juggling", "juggle")]
        report = run_rq1(pool, weird)
        errors = [row for row in report.run_rows() if row.metric.endswith("_error")]
        assert len(errors) == 2  # ldp and a2a fail; random still picks someone

    def test_aggregates_recomputable_from_run_rows(self, pool):
        report = run_rq1(pool, default_rq1_tasks())
        for policy in ("ldp", "a2a", "random"):
            for difficulty in ("easy", "medium", "hard"):
                condition = f"{policy}/{difficulty}"
                runs = [
                    float(row.value)
                    for row in report.run_rows()
                    if row.condition == condition and row.metric.endswith("_latency_ms")
                ]
                mean = float(report.value(condition, "mean_expected_latency_ms"))
                assert mean == pytest.approx(sum(runs) / len(runs))


class TestRq2:
    def test_reference_entry_ratios(self):
        report = run_rq2(default_rq2_corpus())
        frame = float(report.value("mode1", "sentiment_review_tokens"))
        text = float(report.value("mode0", "sentiment_review_tokens"))
        a2a = float(report.value("a2a", "sentiment_review_tokens"))
        assert frame / text <= 0.62
        assert frame / a2a <= 0.67

    def test_empty_corpus_empty_report(self):
        report = run_rq2([])
        assert report.rows == []

    def test_every_entry_has_three_conditions(self):
        corpus = default_rq2_corpus()
        report = run_rq2(corpus)
        for entry in corpus:
            for condition in ("mode0", "mode1", "a2a"):
                assert isinstance(report.value(condition, f"{entry.name}_tokens"), int)


class TestRq4:
    def test_closed_form_against_loop_oracle(self):
        # Independent arithmetic: accumulate the stateless schedule round
        # by round instead of using the closed form.
        model = TranscriptModel()
        for rounds in (1, 2, 3, 5, 10, 17):
            total = 0
            history_resend = 0
            for _ in range(rounds):
                total += model.per_round_request_tokens + history_resend
                total += model.per_round_response_tokens
                history_resend += model.context_resend_tokens_per_round
            assert stateless_total_tokens(model, rounds) == total
            assert (
                session_total_tokens(model, rounds)
                == model.handshake_tokens
                + rounds * (model.per_round_request_tokens + model.per_round_response_tokens)
            )

    def test_session_overhead_zero_at_5_and_10(self):
        report = run_rq4(TranscriptModel())
        assert report.value("session", "rounds_5_overhead_pct") == 0.0
        assert report.value("session", "rounds_10_overhead_pct") == 0.0

    def test_stateless_overhead_in_band_at_10_rounds(self):
        report = run_rq4(TranscriptModel())
        pct = float(report.value("stateless", "rounds_10_overhead_pct"))
        assert 35.0 <= pct <= 43.0

    def test_stateless_overhead_strictly_increases(self):
        report = run_rq4(TranscriptModel())
        pcts = [float(report.value("stateless", f"rounds_{n}_overhead_pct")) for n in (3, 5, 10)]
        assert pcts[0] < pcts[1] < pcts[2]
        tokens = [
            int(report.value("stateless", f"rounds_{n}_overhead_tokens")) for n in (3, 5, 10)
        ]
        assert tokens[0] < tokens[1] < tokens[2]

    def test_one_round_conditions_equal_within_handshake(self):
        model = TranscriptModel()
        gap = abs(session_total_tokens(model, 1) - stateless_total_tokens(model, 1))
        assert gap <= model.handshake_tokens

    def test_message_counts(self):
        report = run_rq4(TranscriptModel())
        assert report.value("session", "rounds_10_messages") == 14
        assert report.value("stateless", "rounds_10_messages") == 20

    def test_model_validation(self):
        with pytest.raises(ValueError):
            TranscriptModel(rounds=0)
        with pytest.raises(ValueError):
            TranscriptModel(handshake_tokens=-1)


class TestRq5:
    def test_mix_shape(self):
        scenarios, revoked = build_rq5_scenarios()
        assert len(scenarios) == 120
        malicious = [s for s in scenarios if s.ground_truth_malicious]
        benign = [s for s in scenarios if not s.ground_truth_malicious]
        assert len(malicious) == 100
        assert len(benign) == 20
        assert len(revoked) == 6
        per_kind = {}
        for s in malicious:
            per_kind[s.kind] = per_kind.get(s.kind, 0) + 1
        assert set(per_kind.values()) == {25}

    def test_detection_rates(self):
        report = run_rq5(seed=42)
        assert report.value("ldp", "detected_count") == 96
        assert report.value("ldp", "detection_rate") == 0.96
        assert report.value("ldp", "false_positive_count") == 0
        assert report.value("bearer", "detected_count") == 6
        assert report.value("bearer", "detection_rate") == 0.06
        assert report.value("bearer", "false_positive_count") == 0

    def test_without_insiders_detection_is_total(self):
        report = run_rq5(seed=42, include_insiders=False)
        assert report.value("ldp", "detection_rate") == 1.0

    def test_deterministic_under_seed(self):
        assert run_rq5(seed=42).rows == run_rq5(seed=42).rows

    def test_zero_false_positives_across_seeds(self):
        for seed in (0, 1, 7, 42, 1337):
            report = run_rq5(seed=seed)
            assert report.value("ldp", "false_positive_count") == 0
            assert report.value("bearer", "false_positive_count") == 0

    def test_each_kind_detected_by_its_own_mechanism(self):
        from ldp.experiments import default_rq5_policy
        from ldp.trust import KIND_MECHANISMS, NonceStore, evaluate_scenario

        policy = default_rq5_policy()
        scenarios, _ = build_rq5_scenarios()
        for scenario in scenarios:
            outcome = evaluate_scenario(
                policy, scenario, store=NonceStore(clock=lambda: 1_700_000_000_000)
            )
            if outcome.detected:
                assert outcome.mechanism == KIND_MECHANISMS[scenario.kind]


class TestRq6:
    def test_default_mix_shape(self):
        scenarios = default_rq6_scenarios()
        assert len(scenarios) == 40
        per_type = {}
        for s in scenarios:
            per_type[s.failure] = per_type.get(s.failure, 0) + 1
        assert set(per_type.values()) == {10}

    def test_ldp_completion_is_total(self):
        report = run_rq6()
        assert report.value("ldp", "completion_rate") == 1.0

    def test_ldp_mean_recovery_112ms(self):
        report = run_rq6()
        assert float(report.value("ldp", "mean_recovery_ms")) == pytest.approx(112.0)

    def test_schema_mismatch_recovers_to_text_at_50ms(self):
        from ldp.experiments import simulate_ldp_fallback

        outcome = simulate_ldp_fallback(
            FallbackScenario(FailureType.SCHEMA_MISMATCH, PayloadMode.SEMANTIC_FRAME)
        )
        assert outcome.completed is True
        assert outcome.final_mode is PayloadMode.TEXT
        assert outcome.recovery_ms == 50

    def test_every_failure_recovers_at_valid_mode(self):
        from ldp.experiments import simulate_ldp_fallback

        for failure in FailureType:
            for start in PayloadMode:
                outcome = simulate_ldp_fallback(FallbackScenario(failure, start))
                assert outcome.completed is True
                assert int(outcome.final_mode) >= 0

    def test_a2a_frequency_checks(self):
        # 10,000 seeded trials per terminal rule.
        schema = a2a_completion_frequency(FailureType.SCHEMA_MISMATCH, trials=10_000, seed=42)
        version = a2a_completion_frequency(FailureType.VERSION_MISMATCH, trials=10_000, seed=42)
        codec = a2a_completion_frequency(FailureType.CODEC_INCOMPATIBILITY, trials=10_000, seed=42)
        timeout = a2a_completion_frequency(FailureType.TIMEOUT_DEGRADATION, trials=10_000, seed=42)
        assert abs(schema - 0.33) <= 0.02
        assert abs(version - 0.50) <= 0.02
        assert codec == 0.0
        assert timeout == 0.0

    def test_deterministic_under_seed(self):
        assert run_rq6(seed=3).rows == run_rq6(seed=3).rows

    def test_mean_degradation_matches_single_step_model(self):
        report = run_rq6()
        assert float(report.value("ldp", "mean_quality_degradation")) == pytest.approx(0.16)


class TestReports:
    def test_csv_header(self):
        report = run_rq4(TranscriptModel())
        text = report_to_csv(report)
        assert text.splitlines()[0] == "experiment,condition,metric,value"

    def test_json_round_trip(self):
        report = run_rq5(seed=42)
        assert report_from_json(report_to_json(report)) == report

    def test_write_is_byte_stable(self, tmp_path):
        for fmt in ("csv", "json"):
            a = tmp_path / f"a.{fmt}"
            b = tmp_path / f"b.{fmt}"
            write_report(run_rq6(seed=42), fmt, str(a))
            write_report(run_rq6(seed=42), fmt, str(b))
            assert a.read_bytes() == b.read_bytes()

    def test_unwritable_path_raises(self, tmp_path):
        with pytest.raises(OSError):
            write_report(run_rq4(TranscriptModel()), "csv", str(tmp_path / "missing" / "r.csv"))

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            write_report(run_rq4(TranscriptModel()), "xml", str(tmp_path / "r.xml"))


class TestFigures:
    @pytest.mark.parametrize(
        "runner",
        [
            lambda pool: run_rq1(pool, default_rq1_tasks()),
            lambda pool: run_rq2(default_rq2_corpus()),
            lambda pool: run_rq4(TranscriptModel()),
            lambda pool: run_rq5(seed=42),
            lambda pool: run_rq6(seed=42),
        ],
        ids=["rq1", "rq2", "rq4", "rq5", "rq6"],
    )
    def test_figures_render_for_every_experiment(self, pool, runner, tmp_path):
        from ldp.figures import render_report_figure

        report = runner(pool)
        out = tmp_path / f"{report.experiment}.png"
        render_report_figure(report, str(out))
        assert out.exists()
        assert out.stat().st_size > 1000

    def test_unknown_experiment_rejected(self, tmp_path):
        from ldp.figures import render_report_figure

        with pytest.raises(ValueError):
            render_report_figure(ExperimentReport("rq9", 0), str(tmp_path / "x.png"))
