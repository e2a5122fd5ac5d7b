"""Prompt assembly, plan generation and the verify-then-regenerate loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .actions import ACTION_CATALOG
from .config import RunConfig
from .graph_store import GraphSchema, KnowledgeGraph
from .plan import PlanFormatError, TraversalPlan, parse_plan, plan_to_dict
from .providers import ChatRequest, Completion, Provider
from .verifier import VerificationReport, feedback_for_retry, verify_plan

log = logging.getLogger(__name__)

SYSTEM_PREAMBLE = (
    "You plan retrieval over a knowledge graph. Write the complete traversal plan for the "
    "question in one go, using only the actions and the node and edge types listed below. "
    "The plan is executed step by step; each step's resulting nodes feed the steps that "
    "reference it, and the nodes of the last step are handed to the answer writer."
)

ACTION_DOCS = {
    "find_node": (
        'find_node(hint, node_type): nodes of node_type whose attributes are semantically similar '
        'to hint (a name or short description taken from the question). Params: {"hint": str, "node_type": str}. '
        "Every plan starts with this action; it may be used again later to locate further anchors."
    ),
    "fetch_neighbors": (
        "fetch_neighbors(source, edge_type | node_type): from the nodes of an earlier step, either the "
        "direct neighbours over one edge type (single hop), or the nearest nodes of a node type reached "
        'over any edges within max_hops hops (multi hop). Params: {"source": step_id, "edge_type": str} or '
        '{"source": step_id, "node_type": str, "max_hops": int (optional)}.'
    ),
    "find_common_nodes": (
        "find_common_nodes(inputs): nodes that are direct neighbours of every input, each input "
        'being the nodes of an earlier step and an edge type. Params: {"inputs": [{"source": step_id, '
        '"edge_type": str}, ...]} with at least two inputs.'
    ),
}

OUTPUT_FORMAT = (
    'Reply with a single JSON object: {"query": <the question>, "rationale": <optional short text>, '
    '"steps": [{"id": <unique step id>, "action": <action name>, "params": {...}}]}. '
    "Steps may only reference earlier steps."
)


@dataclass(frozen=True)
class PromptBundle:
    query: str
    graph_description: str
    action_docs: str
    few_shot_examples: tuple[tuple[str, str], ...] = ()
    retry_feedback: str | None = None


@dataclass
class AttemptRecord:
    attempt: int
    ok: bool
    plan: dict | None
    findings: list[dict]
    feedback: str | None
    input_tokens: int
    output_tokens: int
    prompt_has_feedback: bool

    def to_dict(self) -> dict:
        return {
            "attempt": self.attempt,
            "ok": self.ok,
            "plan": self.plan,
            "findings": self.findings,
            "feedback": self.feedback,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
        }


@dataclass
class PlannerOutcome:
    plan: TraversalPlan | None
    report: VerificationReport | None
    attempts: int
    token_usage: tuple[int, int]
    log: list[AttemptRecord] = field(default_factory=list)
    prompts: list[str] = field(default_factory=list, repr=False)

    @property
    def blocked(self) -> int:
        """Attempts whose parsed plan was rejected by the verifier."""
        return sum(1 for a in self.log if not a.ok and a.plan is not None)


class PlanningExhausted(RuntimeError):
    def __init__(self, outcome: PlannerOutcome, last_error: str):
        super().__init__(f"no valid plan after {outcome.attempts} attempts; last problem: {last_error}")
        self.outcome = outcome
        self.last_error = last_error


def describe_schema(schema: GraphSchema) -> str:
    lines = ["Node types:"]
    for name, keys in sorted(schema.node_types.items()):
        attrs = ", ".join(keys) if keys else "none"
        lines.append(f"- {name} (attributes: {attrs})")
    lines.append("Edge types:")
    for spec in sorted(schema.edge_types):
        way = "traversable both ways" if spec.bidirectional else "source to target only"
        lines.append(f"- {spec.name}: {spec.source} -> {spec.target} ({way})")
    return "\n".join(lines)


def describe_actions(catalog=ACTION_CATALOG) -> str:
    return "\n".join(f"- {ACTION_DOCS[name]}" for name in sorted(catalog))


def load_few_shot(source: str | None = None, domain: str = "academic") -> tuple[tuple[str, str], ...]:
    """Few-shot pairs from a data file: a path, or the packaged examples for ``domain``."""
    if source:
        text = Path(source).read_text(encoding="utf-8")
    else:
        res = resources.files("kgtraverse.data").joinpath(f"fewshot_{domain}.json")
        if not res.is_file():
            return ()
        text = res.read_text("utf-8")
    return tuple(
        (item["query"], json.dumps(item["plan"], indent=2, ensure_ascii=False)) for item in json.loads(text)
    )


def make_bundle(query: str, schema: GraphSchema, few_shot=(), retry_feedback: str | None = None) -> PromptBundle:
    return PromptBundle(
        query=query,
        graph_description=describe_schema(schema),
        action_docs=describe_actions(),
        few_shot_examples=tuple(few_shot),
        retry_feedback=retry_feedback,
    )


def build_prompt(bundle: PromptBundle) -> str:
    parts = [SYSTEM_PREAMBLE, "## Traversal actions\n" + bundle.action_docs, "## Graph structure\n" + bundle.graph_description]
    if bundle.few_shot_examples:
        shots = "\n\n".join(f"Question: {q}\nPlan:\n{doc}" for q, doc in bundle.few_shot_examples)
        parts.append("## Examples\n" + shots)
    if bundle.retry_feedback:
        parts.append(
            "## Problems with the previous plan\nThe previous plan was rejected. Fix these steps:\n"
            + bundle.retry_feedback
        )
    parts.append("## Question\n" + bundle.query)
    parts.append("## Output format\n" + OUTPUT_FORMAT)
    return "\n\n".join(parts) + "\n"


def generate_plan(provider: Provider, bundle: PromptBundle) -> tuple[TraversalPlan, Completion]:
    """Ask ``provider`` for a plan. A PlanFormatError carries the completion as ``completion``."""
    completion = provider.complete(ChatRequest(build_prompt(bundle), "plan", query=bundle.query))
    try:
        return parse_plan(completion.text), completion
    except PlanFormatError as exc:
        exc.completion = completion
        raise


def plan_with_verification(provider: Provider, query: str, graph: KnowledgeGraph, config: RunConfig, few_shot=None) -> PlannerOutcome:
    if few_shot is None:
        few_shot = load_few_shot(config.few_shot, config.domain)
    schema = graph.schema
    outcome = PlannerOutcome(plan=None, report=None, attempts=0, token_usage=(0, 0))
    feedback = None
    last_error = ""
    for attempt in range(1, config.max_retries + 2):
        bundle = make_bundle(query, schema, few_shot, feedback)
        outcome.prompts.append(build_prompt(bundle))
        outcome.attempts = attempt
        try:
            plan, completion = generate_plan(provider, bundle)
        except PlanFormatError as exc:
            completion = exc.completion
            _add_usage(outcome, completion)
            feedback = exc.feedback
            last_error = str(exc)
            outcome.plan, outcome.report = None, None
            outcome.log.append(
                AttemptRecord(attempt, False, None, [], feedback, completion.input_tokens,
                              completion.output_tokens, bundle.retry_feedback is not None)
            )
            log.info("attempt %d: unparseable plan: %s", attempt, exc)
            continue
        _add_usage(outcome, completion)
        report = verify_plan(plan, schema, default_max_hops=config.max_hops)
        outcome.plan, outcome.report = plan, report
        feedback_text = None if report.passed else feedback_for_retry(report)
        outcome.log.append(
            AttemptRecord(attempt, report.passed, plan_to_dict(plan), [f.to_dict() for f in report.findings],
                          feedback_text, completion.input_tokens, completion.output_tokens,
                          bundle.retry_feedback is not None)
        )
        if report.passed:
            return outcome
        log.info("attempt %d: plan rejected:\n%s", attempt, feedback_text)
        feedback = feedback_text
        last_error = feedback_text
    raise PlanningExhausted(outcome, last_error)


def _add_usage(outcome: PlannerOutcome, completion: Completion) -> None:
    i, o = outcome.token_usage
    outcome.token_usage = (i + completion.input_tokens, o + completion.output_tokens)

