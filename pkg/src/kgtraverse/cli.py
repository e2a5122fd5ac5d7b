"""Command-line entry point.

Exit codes: 0 success or classified outcome, 1 verification failure (``verify``),
2 usage, configuration or input errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .eval import read_questions, run_batch
from .executor import run_query
from .graph_store import GraphError, dump_graph, load_graph, load_graph_file
from .grbench import convert_graph, convert_questions, read_qa_file
from .plan import PlanFormatError, parse_plan, serialize_plan
from .planner import PlanningExhausted, load_few_shot, plan_with_verification
from .providers import (
    ChatCompletionClient,
    EchoAnswerer,
    ProviderError,
    RoutingProvider,
    ScriptedProvider,
    TemplatePlanner,
)
from .similarity import HashedTokenEmbedder, HttpEmbedder
from .verifier import verify_plan

log = logging.getLogger("kgtraverse")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

# RunConfig field -> flag value type
OVERRIDES = {
    "provider": str,
    "script": str,
    "templates": str,
    "model": str,
    "endpoint": str,
    "temperature": float,
    "theta": float,
    "top_k": int,
    "max_hops": int,
    "step_cap": int,
    "max_retries": int,
    "context_window": int,
    "input_rate": float,
    "output_rate": float,
    "parallelism": int,
    "results_path": str,
    "summary_path": str,
    "few_shot": str,
}


def build_provider(config: RunConfig):
    if config.provider == "template":
        return RoutingProvider(
            TemplatePlanner.from_file(config.templates, config.domain),
            EchoAnswerer(config.answer_keys),
        )
    if config.provider == "script":
        return ScriptedProvider.from_file(config.script)
    return ChatCompletionClient(
        config.endpoint, config.model, token=config.api_key(),
        temperature=config.temperature, timeout=config.request_timeout,
    )


def build_embedder(config: RunConfig):
    if config.embedding == "http":
        return HttpEmbedder(config.embedding_endpoint, token=config.embedding_api_key())
    return HashedTokenEmbedder()


def load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        config = RunConfig.from_file(args.config)
    else:
        config = RunConfig()
    changes = {}
    for name in OVERRIDES:
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    if getattr(args, "no_timing", False):
        changes["record_timing"] = False
    if changes:
        try:
            config = config.replace(**changes)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None
    return config


def _graph_path(args, config: RunConfig) -> str:
    path = getattr(args, "graph", None) or config.graph
    if not path:
        raise ConfigError("graph: no graph file given on the command line or in the config")
    return path


def cmd_ingest(args) -> int:
    src = Path(args.input)
    try:
        text = src.read_text(encoding="utf-8")
        if args.format == "grbench":
            try:
                raw = json.loads(text)
            except json.JSONDecodeError as exc:
                raise GraphError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
            graph = load_graph(convert_graph(raw))
        else:
            graph = load_graph(text)
    except (OSError, GraphError) as exc:
        print(f"error: {src}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    Path(args.output).write_text(dump_graph(graph), encoding="utf-8")
    if args.qa:
        try:
            records = convert_questions(read_qa_file(args.qa))
        except (OSError, ValueError, KeyError) as exc:
            print(f"error: {args.qa}: {exc}", file=sys.stderr)
            return EXIT_USAGE
        out = args.qa_output or str(Path(args.output).with_suffix(".questions.jsonl"))
        with open(out, "w", encoding="utf-8") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    print(graph.schema.summary())
    return EXIT_OK


def cmd_verify(args) -> int:
    try:
        graph = load_graph_file(args.graph)
        plan = parse_plan(Path(args.plan).read_text(encoding="utf-8"))
    except PlanFormatError as exc:
        print(f"error: {args.plan}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, GraphError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = verify_plan(plan, graph.schema, default_max_hops=args.max_hops)
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_run(args) -> int:
    try:
        config = load_config(args)
        graph = load_graph_file(_graph_path(args, config))
        provider = build_provider(config)
        embedder = build_embedder(config)
    except (ConfigError, OSError, GraphError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.dry_run:
        try:
            outcome = plan_with_verification(provider, args.query, graph, config)
        except PlanningExhausted as exc:
            outcome = exc.outcome
        except ProviderError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_OK
        if outcome.plan is not None:
            print(serialize_plan(outcome.plan))
        if outcome.report is not None:
            print(outcome.report.to_json())
        else:
            print(json.dumps({"verdict": "fail", "error": outcome.log[-1].feedback if outcome.log else None}))
        return EXIT_OK
    record = run_query(graph, provider, args.query, config, embedder=embedder)
    if record.answer is not None:
        print(record.answer)
    else:
        print(f"[{record.error_class}] {record.error_detail}", file=sys.stderr)
    results = args.results or config.results_path
    if results:
        Path(results).parent.mkdir(parents=True, exist_ok=True)
        with open(results, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        config = load_config(args)
        graph = load_graph_file(_graph_path(args, config))
        questions = read_questions(args.questions)
        provider = build_provider(config)
        embedder = build_embedder(config)
        load_few_shot(config.few_shot, config.domain)
    except (ConfigError, OSError, GraphError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    results = args.results or config.results_path or "results.jsonl"
    summary_path = args.summary or config.summary_path or str(Path(results).with_suffix(".summary.json"))
    summary, _ = run_batch(graph, provider, questions, config, embedder=embedder,
                           results_path=results, summary_path=summary_path)
    doc = summary.to_dict(config.rouge_floor)
    print(f"questions: {doc['questions']}")
    print(f"mean ROUGE-L: {_fmt(doc['mean_rouge_l'])}")
    print(f"mean cost (USD): {_fmt(doc['mean_cost_usd'])}")
    print(f"mean wall time (s): {_fmt(doc['mean_wall_time_s'])}")
    for cls, p in (doc["error_probabilities"] or {}).items():
        print(f"P({cls}): {p:.4f}")
    return EXIT_OK


def _fmt(value) -> str:
    return "undefined" if value is None else f"{value:.6g}"


def _add_overrides(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration")
    g = p.add_argument_group("configuration overrides (win over the config file)")
    for name, typ in OVERRIDES.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    g.add_argument("--no-timing", action="store_true", help="write null timings for byte-stable results")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgtraverse", description="Plan, verify and execute knowledge-graph traversals.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert a graph file to the canonical format")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--format", choices=("native", "grbench"), default="native")
    p.add_argument("--qa", help="GRBENCH question file to convert alongside the graph")
    p.add_argument("--qa-output")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("verify", help="verify a plan document against a graph schema")
    p.add_argument("graph")
    p.add_argument("plan")
    p.add_argument("--max-hops", type=int, default=3)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("run", help="answer one question")
    p.add_argument("graph")
    p.add_argument("query")
    p.add_argument("--dry-run", action="store_true", help="stop after verification; print plan and report")
    p.add_argument("--results", help="append the run record to this JSONL file")
    _add_overrides(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="run a question file and write results plus summary")
    p.add_argument("graph")
    p.add_argument("questions")
    p.add_argument("--results")
    p.add_argument("--summary")
    _add_overrides(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
