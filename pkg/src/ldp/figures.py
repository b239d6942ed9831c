"""Render experiment reports as figures saved next to the delimited output.

One entry point, :func:`render_report_figure`, dispatches on the report's
experiment id and writes a single PNG summarizing it. Rendering is
headless (Agg backend) and uses only aggregate rows, so a figure can be
rebuilt from any saved report.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from ldp.experiments import RQ4_ROUND_COUNTS, ExperimentReport

_POLICY_COLORS = {"ldp": "#2a6fb0", "a2a": "#c0622b", "random": "#7a7a7a", "bearer": "#c0622b"}


def _save(fig: "plt.Figure", path: str) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _render_rq1(report: ExperimentReport, path: str) -> None:
    difficulties = ("easy", "medium", "hard")
    policies = ("ldp", "a2a", "random")
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.25
    for offset, policy in enumerate(policies):
        means = [
            float(report.value(f"{policy}/{d}", "mean_expected_latency_ms")) / 1000.0
            for d in difficulties
        ]
        positions = [i + (offset - 1) * width for i in range(len(difficulties))]
        ax.bar(positions, means, width=width, label=policy, color=_POLICY_COLORS[policy])
    ax.set_xticks(range(len(difficulties)))
    ax.set_xticklabels(difficulties)
    ax.set_ylabel("mean expected latency (s)")
    ax.set_title("Routing policy latency by task difficulty")
    ax.legend()
    _save(fig, path)


def _render_rq2(report: ExperimentReport, path: str) -> None:
    conditions = ("mode0", "mode1", "a2a")
    labels = {"mode0": "text", "mode1": "semantic frame", "a2a": "envelope JSON"}
    entry_names = sorted(
        {
            row.metric.removesuffix("_tokens")
            for row in report.run_rows()
            if row.metric.endswith("_tokens")
        }
    )
    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.25
    for offset, condition in enumerate(conditions):
        values = [float(report.value(condition, f"{name}_tokens")) for name in entry_names]
        positions = [i + (offset - 1) * width for i in range(len(entry_names))]
        ax.bar(positions, values, width=width, label=labels[condition])
    ax.set_xticks(range(len(entry_names)))
    ax.set_xticklabels(entry_names, rotation=15, ha="right")
    ax.set_ylabel("estimated tokens")
    ax.set_title("Payload encoding size by corpus entry")
    ax.legend()
    _save(fig, path)


def _render_rq4(report: ExperimentReport, path: str) -> None:
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 4))
    for condition in ("session", "stateless"):
        totals = [
            float(report.value(condition, f"rounds_{n}_total_tokens")) for n in RQ4_ROUND_COUNTS
        ]
        left.plot(RQ4_ROUND_COUNTS, totals, marker="o", label=condition)
        pcts = [
            float(report.value(condition, f"rounds_{n}_overhead_pct")) for n in RQ4_ROUND_COUNTS
        ]
        right.plot(RQ4_ROUND_COUNTS, pcts, marker="o", label=condition)
    left.set_xlabel("rounds")
    left.set_ylabel("total tokens")
    left.set_title("Token totals")
    left.legend()
    right.set_xlabel("rounds")
    right.set_ylabel("overhead (%)")
    right.set_title("Context re-send overhead")
    right.legend()
    _save(fig, path)


def _render_rq5(report: ExperimentReport, path: str) -> None:
    conditions = ("ldp", "bearer")
    detection = [100.0 * float(report.value(c, "detection_rate")) for c in conditions]
    false_pos = [100.0 * float(report.value(c, "false_positive_rate")) for c in conditions]
    fig, (left, right) = plt.subplots(1, 2, figsize=(8, 4))
    colors = [_POLICY_COLORS[c] for c in conditions]
    left.bar(conditions, detection, color=colors)
    left.set_ylabel("detection rate (%)")
    left.set_ylim(0, 100)
    left.set_title("Attack detection")
    right.bar(conditions, false_pos, color=colors)
    right.set_ylabel("false positive rate (%)")
    right.set_ylim(0, 100)
    right.set_title("False positives")
    _save(fig, path)


def _render_rq6(report: ExperimentReport, path: str) -> None:
    conditions = ("ldp", "a2a")
    completion = [100.0 * float(report.value(c, "completion_rate")) for c in conditions]
    recovery = [float(report.value(c, "mean_recovery_ms")) for c in conditions]
    degradation = [float(report.value(c, "mean_quality_degradation")) for c in conditions]
    fig, axes = plt.subplots(1, 3, figsize=(10, 4))
    colors = [_POLICY_COLORS["ldp"], _POLICY_COLORS["a2a"]]
    for ax, values, title, ylabel in (
        (axes[0], completion, "Task completion", "completion (%)"),
        (axes[1], recovery, "Mean recovery latency", "latency (ms)"),
        (axes[2], degradation, "Mean quality degradation", "degradation (0-1)"),
    ):
        ax.bar(conditions, values, color=colors)
        ax.set_title(title)
        ax.set_ylabel(ylabel)
    axes[0].set_ylim(0, 100)
    _save(fig, path)


_RENDERERS = {
    "rq1": _render_rq1,
    "rq2": _render_rq2,
    "rq4": _render_rq4,
    "rq5": _render_rq5,
    "rq6": _render_rq6,
}


def render_report_figure(report: ExperimentReport, path: str) -> None:
    """Write a PNG summary of the report; raises on unknown experiment ids."""
    renderer = _RENDERERS.get(report.experiment)
    if renderer is None:
        raise ValueError(f"no figure renderer for experiment {report.experiment!r}")
    renderer(report, path)
