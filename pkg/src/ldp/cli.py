"""Command-line entry point.

Subcommands: validate-card, encode, serve, call, route, policy, experiment.
Exit codes follow one contract everywhere: 0 success, 1 validation or
detection failure, 2 usage error, 3 runtime error. Human-readable output
goes to stdout, diagnostics to stderr, and ``--format json`` switches
machine-readable output on for every subcommand.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Any

from ldp.delegates import BACKEND_URL_ENV, serve_pool
from ldp.errors import (
    LDPError,
    PolicyRejectionError,
    RoutingError,
    ValidationError,
)
from ldp.experiments import (
    DEFAULT_SEED,
    CorpusEntry,
    ExperimentReport,
    FallbackScenario,
    TranscriptModel,
    default_rq1_tasks,
    default_rq2_corpus,
    report_to_csv,
    report_to_json,
    run_rq1,
    run_rq2,
    run_rq4,
    run_rq5,
    run_rq6,
    write_report,
)
from ldp.identity import (
    CapabilityEntry,
    DelegateIdentityCard,
    card_from_json,
    validate_card,
)
from ldp.payload import (
    PayloadMode,
    SemanticFrame,
    encode_a2a,
    encode_mode0,
    encode_mode1,
)
from ldp.provenance import record_to_dict
from ldp.routing import DelegatePool, route_a2a, route_ldp, route_random, task_from_dict
from ldp.session import SessionConfig, run_handshake
from ldp.trust import (
    AttackKind,
    AttackScenario,
    ClaimAction,
    EnvelopeAction,
    InvokeAction,
    JoinAction,
    evaluate_scenario,
    policy_from_json,
)
from ldp.wire import KeyMaterial, decode_envelope, tcp_connect

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_RUNTIME = 3


def _bundled(name: str) -> str:
    import importlib.resources

    return importlib.resources.files("ldp.data").joinpath(name).read_text(encoding="utf-8")


def default_pool() -> DelegatePool:
    """The bundled three-delegate pool."""
    return DelegatePool.from_json(_bundled("pool.json"))


def _load_pool(path: str | None) -> DelegatePool:
    if path is None:
        return default_pool()
    return DelegatePool.from_json(Path(path).read_text(encoding="utf-8"))


def _emit(args: argparse.Namespace, text: str, payload: dict[str, Any]) -> None:
    if args.format == "json":
        print(json.dumps(payload, indent=2, ensure_ascii=False))
    else:
        print(text)


# --- validate-card ----------------------------------------------------------


def cmd_validate_card(args: argparse.Namespace) -> int:
    try:
        card = card_from_json(Path(args.card).read_text(encoding="utf-8"))
        report = validate_card(card)
    except ValidationError as exc:
        report = exc.report or [str(exc)]
    if report:
        _emit(args, "\n".join(report), {"valid": False, "report": report})
        return EXIT_FAILURE
    _emit(args, "card is valid", {"valid": True, "report": []})
    return EXIT_OK


# --- encode -----------------------------------------------------------------


def _load_frame_spec(path: str) -> SemanticFrame:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValidationError("frame spec must be a JSON object")
    labels = data.get("labels")
    return SemanticFrame(
        task_type=data.get("task_type", ""),
        instruction=data.get("instruction", ""),
        input=data.get("input", ""),
        expected_output_format=data.get("expected_output_format", ""),
        labels=tuple(labels) if labels is not None else None,
    )


def cmd_encode(args: argparse.Namespace) -> int:
    if args.mode == "frame":
        if args.frame_spec is None:
            print("encode --mode frame requires --frame-spec", file=sys.stderr)
            return EXIT_USAGE
        payload = encode_mode1(_load_frame_spec(args.frame_spec))
    else:
        if args.infile is None:
            print("encode requires --in for text and a2a modes", file=sys.stderr)
            return EXIT_USAGE
        text = Path(args.infile).read_text(encoding="utf-8")
        payload = encode_mode0(text) if args.mode == "text" else encode_a2a(text)
    _emit(
        args,
        f"{payload.text()}\ntoken_estimate: {payload.token_estimate}",
        {
            "mode": payload.mode.wire_name,
            "bytes": payload.text(),
            "token_estimate": payload.token_estimate,
        },
    )
    return EXIT_OK


# --- serve ------------------------------------------------------------------


def cmd_serve(args: argparse.Namespace) -> int:
    pool = _load_pool(args.pool)
    policy = None
    if args.policy is not None:
        policy = policy_from_json(Path(args.policy).read_text(encoding="utf-8"))
    host, _, port_text = args.listen.partition(":")
    server = serve_pool(
        pool,
        policy=policy,
        host=host or "127.0.0.1",
        port=int(port_text) if port_text else 0,
        backend_url=os.environ.get(BACKEND_URL_ENV),
    )
    host, port = server.address
    _emit(
        args,
        f"serving {len(pool)} delegates on {host}:{port}",
        {"listening": f"{host}:{port}", "delegates": [c.delegate_id for c in pool]},
    )
    sys.stdout.flush()
    try:
        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        server.stop()
    return EXIT_OK


# --- call -------------------------------------------------------------------


def _default_caller_card(key: KeyMaterial, domain: str) -> DelegateIdentityCard:
    return DelegateIdentityCard(
        delegate_id="cli-caller",
        principal_id="org:cli",
        model_family="cli",
        model_name="cli",
        model_version="0",
        runtime_version="cli",
        trust_domain=domain,
        context_window=1,
        modalities_supported=("text",),
        languages_supported=("en",),
        capabilities=(CapabilityEntry("client", 0.5, 1, "low"),),
        reasoning_profile="client",
        cost_profile="low",
        public_key=key.public_key,
    )


def cmd_call(args: argparse.Namespace) -> int:
    task = task_from_dict(json.loads(Path(args.task).read_text(encoding="utf-8")))
    config = SessionConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
    key = KeyMaterial.generate()
    if args.card is not None:
        from dataclasses import replace

        card = card_from_json(Path(args.card).read_text(encoding="utf-8"))
        card = replace(card, public_key=key.public_key)
    else:
        card = _default_caller_card(key, args.caller_domain)

    host, _, port_text = args.endpoint.partition(":")
    conn = tcp_connect(host, int(port_text), timeout=args.timeout_secs)
    try:
        session = run_handshake(conn, card, config, key=key)
        assert session.config is not None
        mode = session.config.payload_mode
        if mode >= PayloadMode.SEMANTIC_FRAME:
            payload = encode_mode1(
                SemanticFrame(
                    task_type=task.domain,
                    instruction=task.prompt,
                    input="",
                    expected_output_format="text",
                )
            )
        else:
            payload = encode_mode0(task.prompt)
        result = session.submit_task(payload, skill=task.required_skill)
        session.close()
    except PolicyRejectionError as exc:
        print(
            json.dumps({"rejected": True, "reason": str(exc), "mechanism": exc.mechanism}),
            file=sys.stderr,
        )
        return EXIT_FAILURE
    provenance = record_to_dict(result.provenance)
    _emit(
        args,
        f"{result.content}\nprovenance: {json.dumps(provenance, ensure_ascii=False)}",
        {
            "content": result.content,
            "mode": result.mode.wire_name,
            "provenance": provenance,
            "simulated_latency_ms": result.simulated_latency_ms,
            "fallback_notices": list(result.fallback_notices),
        },
    )
    return EXIT_OK


# --- route ------------------------------------------------------------------


def cmd_route(args: argparse.Namespace) -> int:
    pool = _load_pool(args.pool)
    task = task_from_dict(json.loads(Path(args.task).read_text(encoding="utf-8")))
    if args.policy == "ldp":
        decision = route_ldp(pool, task)
    elif args.policy == "a2a":
        decision = route_a2a(pool, task)
    else:
        decision = route_random(pool, task, args.seed)
    _emit(
        args,
        f"{decision.chosen} (expected {decision.expected_latency_ms} ms): {decision.rationale}",
        decision.to_dict(),
    )
    return EXIT_OK


# --- policy check -----------------------------------------------------------


def _scenario_from_dict(data: dict[str, Any]) -> AttackScenario:
    from ldp.identity import card_from_dict

    action_raw = data.get("action")
    if not isinstance(action_raw, dict):
        raise ValidationError("scenario requires an action object")
    action_type = action_raw.get("type")
    if action_type == "join":
        action: Any = JoinAction(card=card_from_dict(action_raw["card"]))
        actor = action.card
    elif action_type == "claim":
        action = ClaimAction(
            delegate_id=action_raw["delegate_id"], claimed=tuple(action_raw.get("claimed", ()))
        )
        actor = card_from_dict(data["actor_card"]) if "actor_card" in data else None
    elif action_type == "envelope":
        envelope = decode_envelope(json.dumps(action_raw["envelope"]).encode("utf-8"))
        action = EnvelopeAction(
            envelope=envelope, previously_seen=bool(action_raw.get("previously_seen", False))
        )
        actor = card_from_dict(data["actor_card"]) if "actor_card" in data else None
    elif action_type == "invoke":
        action = InvokeAction(
            caller_domain=action_raw["caller_domain"],
            target_delegate=action_raw["target_delegate"],
            target_domain=action_raw["target_domain"],
        )
        actor = card_from_dict(data["actor_card"]) if "actor_card" in data else None
    else:
        raise ValidationError(f"unknown scenario action type {action_type!r}")
    if actor is None:
        actor = _default_caller_card(KeyMaterial.generate(0), "research.internal")
    return AttackScenario(
        kind=AttackKind(data.get("kind", "untrusted_domain_join")),
        actor_card=actor,
        action=action,
        ground_truth_malicious=bool(data.get("ground_truth_malicious", True)),
        bearer_token=data.get("bearer_token", ""),
    )


def cmd_policy(args: argparse.Namespace) -> int:
    policy = policy_from_json(Path(args.policy_file).read_text(encoding="utf-8"))
    scenario = _scenario_from_dict(json.loads(Path(args.scenario).read_text(encoding="utf-8")))
    outcome = evaluate_scenario(policy, scenario)
    payload = {
        "detected": outcome.detected,
        "mechanism": outcome.mechanism,
        "false_positive": outcome.false_positive,
    }
    text = (
        f"detected via {outcome.mechanism}" if outcome.detected else "not detected"
    )
    _emit(args, text, payload)
    return EXIT_FAILURE if outcome.detected else EXIT_OK


# --- experiment -------------------------------------------------------------


def _load_experiment_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValidationError("experiment config must be a JSON object")
    return data


def _run_experiment(name: str, seed: int, config: dict[str, Any]) -> ExperimentReport:
    if name == "rq1":
        pool = _load_pool(config.get("pool"))
        tasks = (
            [task_from_dict(t) for t in config["tasks"]]
            if "tasks" in config
            else default_rq1_tasks()
        )
        return run_rq1(pool, tasks, seed=seed)
    if name == "rq2":
        if "corpus" in config:
            corpus = [
                CorpusEntry(
                    name=entry["name"],
                    text=entry["text"],
                    frame=SemanticFrame(
                        task_type=entry["frame"]["task_type"],
                        instruction=entry["frame"]["instruction"],
                        input=entry["frame"].get("input", ""),
                        expected_output_format=entry["frame"].get("expected_output_format", ""),
                        labels=(
                            tuple(entry["frame"]["labels"])
                            if entry["frame"].get("labels") is not None
                            else None
                        ),
                    ),
                )
                for entry in config["corpus"]
            ]
        else:
            corpus = default_rq2_corpus()
        return run_rq2(corpus, seed=seed)
    if name == "rq4":
        model_fields = {
            k: config[k]
            for k in (
                "rounds",
                "per_round_request_tokens",
                "per_round_response_tokens",
                "handshake_tokens",
                "context_resend_tokens_per_round",
            )
            if k in config
        }
        return run_rq4(TranscriptModel(**model_fields), seed=seed)
    if name == "rq5":
        return run_rq5(seed=seed, include_insiders=config.get("include_insiders", True))
    if name == "rq6":
        scenarios = None
        if "scenarios" in config:
            from ldp.delegates import FailureType

            scenarios = [
                FallbackScenario(
                    failure=FailureType(s["failure"]),
                    starting_mode=PayloadMode(s["starting_mode"]),
                    seed=seed,
                )
                for s in config["scenarios"]
            ]
        return run_rq6(scenarios, seed=seed)
    raise ValidationError(f"unknown experiment {name!r}")


def cmd_experiment(args: argparse.Namespace) -> int:
    config = _load_experiment_config(args.config)
    report = _run_experiment(args.name, args.seed, config)
    if args.out is None:
        print(report_to_json(report) if args.format == "json" else report_to_csv(report), end="")
        return EXIT_OK
    write_report(report, args.format, args.out)
    outputs = {"report": args.out}
    if not args.no_figures:
        from ldp.figures import render_report_figure

        figure_path = str(Path(args.out).with_suffix(".png"))
        render_report_figure(report, figure_path)
        outputs["figure"] = figure_path
    if args.format == "json" and args.out:
        print(json.dumps(outputs))
    else:
        print("\n".join(f"{kind}: {path}" for kind, path in outputs.items()))
    return EXIT_OK


# --- parser -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ldp",
        description="Identity-aware delegation protocol: cards, payloads, sessions, trust, experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p: argparse.ArgumentParser) -> None:
        p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("validate-card", help="validate an identity card file")
    p.add_argument("card")
    add_format(p)
    p.set_defaults(func=cmd_validate_card)

    p = sub.add_parser("encode", help="encode task content at a payload mode")
    p.add_argument("--mode", choices=("text", "frame", "a2a"), required=True)
    p.add_argument("--in", dest="infile")
    p.add_argument("--frame-spec", dest="frame_spec")
    add_format(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("serve", help="run mock delegates behind the TCP transport")
    p.add_argument("--pool", help="pool file (defaults to the bundled pool)")
    p.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    p.add_argument("--policy", help="trust domain policy file")
    add_format(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("call", help="submit one task to a delegate endpoint")
    p.add_argument("endpoint", metavar="HOST:PORT")
    p.add_argument("--task", required=True, help="task spec JSON file")
    p.add_argument("--config", required=True, help="session config JSON file")
    p.add_argument("--card", help="caller identity card file")
    p.add_argument("--caller-domain", default="research.internal")
    p.add_argument("--timeout-secs", type=float, default=10.0)
    add_format(p)
    p.set_defaults(func=cmd_call)

    p = sub.add_parser("route", help="pick a delegate for a task")
    p.add_argument("--policy", choices=("ldp", "a2a", "random"), required=True)
    p.add_argument("--pool", help="pool file (defaults to the bundled pool)")
    p.add_argument("--task", required=True, help="task spec JSON file")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    add_format(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("policy", help="trust policy checks")
    policy_sub = p.add_subparsers(dest="policy_command", required=True)
    check = policy_sub.add_parser("check", help="evaluate a scenario against a policy")
    check.add_argument("policy_file")
    check.add_argument("scenario")
    add_format(check)
    check.set_defaults(func=cmd_policy)

    p = sub.add_parser("experiment", help="run a reproduction experiment")
    p.add_argument("name", choices=("rq1", "rq2", "rq4", "rq5", "rq6"))
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--out", help="report path; a figure lands next to it")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", help="JSON config overriding experiment inputs")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        lines = exc.report or [str(exc)]
        print("\n".join(lines), file=sys.stderr)
        return EXIT_FAILURE
    except (RoutingError, PolicyRejectionError) as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    except LDPError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
