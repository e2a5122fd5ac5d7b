"""Plan execution, context rendering, answer generation and the end-to-end query run."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field

from .actions import ActionError, NodeSet, fetch_neighbors, find_common_nodes, find_node
from .config import RunConfig
from .graph_store import GraphError, KnowledgeGraph, NodeId
from .plan import (
    FetchNeighborsParams,
    FindCommonNodesParams,
    FindNodeParams,
    TraversalPlan,
    params_to_dict,
    plan_to_dict,
)
from .planner import PlanningExhausted, plan_with_verification
from .providers import ChatRequest, Provider, ProviderError, estimate_tokens
from .similarity import Embedder

log = logging.getLogger(__name__)

COMPLETE = "complete"
EXECUTION_BREAK = "execution-break"
CONTEXT_WINDOW_EXCEEDED = "context-window-exceeded"

ERROR_NONE = "none"
ERROR_HALLUCINATION_BLOCKED = "hallucination-blocked-at-verification"
ERROR_PLANNING_EXHAUSTED = "planning-exhausted"
ERROR_EXECUTION_BREAK = EXECUTION_BREAK
ERROR_CONTEXT_WINDOW = CONTEXT_WINDOW_EXCEEDED
ERROR_PROVIDER = "provider-error"
ERROR_CLASSES = (
    ERROR_NONE,
    ERROR_HALLUCINATION_BLOCKED,
    ERROR_PLANNING_EXHAUSTED,
    ERROR_EXECUTION_BREAK,
    ERROR_CONTEXT_WINDOW,
    ERROR_PROVIDER,
)

EMPTY_CONTEXT = "(no nodes were retrieved)"

ANSWER_PREAMBLE = (
    "Answer the question using only the knowledge-graph context below. "
    "If the context does not contain the answer, say that it does not."
)


class ContextWindowExceeded(RuntimeError):
    pass


@dataclass
class StepRecord:
    step_id: str
    action: str
    params: dict
    result_size: int
    truncated: bool = False
    below_threshold: bool = False
    no_candidates: bool = False
    duration_s: float | None = None
    error: str | None = None


@dataclass
class ExecutionTrace:
    steps: list[StepRecord]
    status: str
    final_nodes: tuple[NodeId, ...] = ()
    context_blocks: tuple[str, ...] = ()
    final_context: str | None = None
    error: str | None = None

    @property
    def truncated(self) -> bool:
        return bool(self.steps) and self.steps[-1].truncated

    def to_dict(self, timing: bool = True) -> dict:
        steps = []
        for s in self.steps:
            d = asdict(s)
            if not timing:
                d["duration_s"] = None
            steps.append(d)
        return {
            "steps": steps,
            "status": self.status,
            "final_nodes": list(self.final_nodes),
            "final_context": self.final_context,
            "error": self.error,
        }


@dataclass
class AnswerRecord:
    answer: str
    trace: ExecutionTrace
    token_usage: tuple[int, int]
    context_nodes_sent: int
    context_reduced: bool


def render_node(graph: KnowledgeGraph, v: NodeId) -> str:
    node = graph.nodes[v]
    lines = [f"[({node.node_type}) {v}]"]
    lines.extend(f"{k}: {node.attributes[k]}" for k in sorted(node.attributes))
    return "\n".join(lines)


def render_blocks(graph: KnowledgeGraph, ids) -> tuple[str, ...]:
    return tuple(render_node(graph, v) for v in sorted(ids))


def join_context(blocks) -> str:
    return "\n\n".join(blocks) if blocks else EMPTY_CONTEXT


def execute_plan(
    graph: KnowledgeGraph, plan: TraversalPlan, config: RunConfig, embedder: Embedder | None = None
) -> ExecutionTrace:
    """Run the steps in order; each step sees the node sets of the steps it references.

    Empty intermediate sets flow on to later steps. Anything the actions reject (only
    possible for plans that skipped verification) stops the run as an execution break.
    """
    results: dict[str, NodeSet] = {}
    records: list[StepRecord] = []
    for step in plan.steps:
        t0 = time.perf_counter()
        p = step.params
        try:
            if isinstance(p, FindNodeParams):
                out = find_node(graph, p.hint, p.node_type, config.similarity, embedder, step.step_id)
                if config.step_cap is not None and len(out) > config.step_cap:
                    out = NodeSet(frozenset(sorted(out.members)[: config.step_cap]), step.step_id,
                                  truncated=True, below_threshold=out.below_threshold)
            elif isinstance(p, FetchNeighborsParams):
                out = fetch_neighbors(
                    graph, results[p.source], p.param,
                    max_hops=p.max_hops if p.max_hops is not None else config.max_hops,
                    cap=config.step_cap, provenance=step.step_id, allow_empty=True,
                )
            elif isinstance(p, FindCommonNodesParams):
                out = find_common_nodes(
                    graph, [(results[i.source], i.edge_type) for i in p.inputs],
                    cap=config.step_cap, provenance=step.step_id,
                )
            else:
                raise ActionError(f"action {step.action!r} is not executable")
        except (ActionError, GraphError, KeyError, ValueError) as exc:
            msg = f"step {step.step_id} ({step.action}): {exc}"
            records.append(StepRecord(step.step_id, step.action, params_to_dict(step), 0,
                                      duration_s=time.perf_counter() - t0, error=str(exc)))
            log.warning("execution break at %s", msg)
            return ExecutionTrace(records, EXECUTION_BREAK, error=msg)
        results[step.step_id] = out
        records.append(StepRecord(
            step.step_id, step.action, params_to_dict(step), len(out),
            truncated=out.truncated, below_threshold=out.below_threshold, no_candidates=out.no_candidates,
            duration_s=time.perf_counter() - t0,
        ))
    final = results[plan.steps[-1].step_id]
    blocks = render_blocks(graph, final.members)
    return ExecutionTrace(records, COMPLETE, tuple(sorted(final.members)), blocks, join_context(blocks))


def answer_prompt(query: str, context: str) -> str:
    return f"{ANSWER_PREAMBLE}\n\nQuestion: {query}\n\nContext:\n{context}\n\nAnswer:"


def _count_tokens(provider, text: str) -> int:
    counter = getattr(provider, "count_tokens", None)
    return counter(text) if callable(counter) else estimate_tokens(text)


def fit_context(provider, query: str, blocks: tuple[str, ...], window: int) -> tuple[str, int]:
    """Largest prefix of ``blocks`` whose answer prompt fits in ``window`` tokens."""
    if _count_tokens(provider, answer_prompt(query, EMPTY_CONTEXT)) > window:
        raise ContextWindowExceeded(f"answer prompt exceeds the {window}-token window even without context")
    lo, hi = 0, len(blocks)
    # token count grows with the number of kept blocks, so bisect on it
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if _count_tokens(provider, answer_prompt(query, join_context(blocks[:mid]))) <= window:
            lo = mid
        else:
            hi = mid - 1
    return answer_prompt(query, join_context(blocks[:lo])), lo


def generate_answer(provider: Provider, query: str, trace: ExecutionTrace, config: RunConfig) -> AnswerRecord:
    if trace.status != COMPLETE:
        raise ValueError(f"cannot answer from a trace with status {trace.status!r}")
    prompt, kept = fit_context(provider, query, trace.context_blocks, config.context_window)
    context = join_context(trace.context_blocks[:kept])
    completion = provider.complete(ChatRequest(prompt, "answer", query=query, context=context))
    answer = completion.text.strip() or "(empty answer)"
    return AnswerRecord(answer, trace, (completion.input_tokens, completion.output_tokens),
                        kept, kept < len(trace.context_blocks))


@dataclass
class RunRecord:
    query: str
    error_class: str
    question_id: str | None = None
    answer: str | None = None
    error_detail: str | None = None
    plan: dict | None = None
    attempts: list[dict] = field(default_factory=list)
    trace: dict | None = None
    context_nodes_sent: int = 0
    context_reduced: bool = False
    input_tokens: int = 0
    output_tokens: int = 0
    provider_calls: int = 0
    hallucinations_blocked: int = 0
    timing: dict | None = None

    @property
    def plan_attempts(self) -> int:
        return len(self.attempts)

    @property
    def wall_time_s(self) -> float | None:
        return None if self.timing is None else self.timing["wall_s"]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, ensure_ascii=False)

    @classmethod
    def from_dict(cls, doc: dict) -> RunRecord:
        return cls(**doc)


def run_query(
    graph: KnowledgeGraph,
    provider: Provider,
    query: str,
    config: RunConfig,
    question_id: str | None = None,
    embedder: Embedder | None = None,
    few_shot=None,
) -> RunRecord:
    """Plan with verification, execute, answer. Failures come back as classified records."""
    rec = RunRecord(query=query, error_class=ERROR_NONE, question_id=question_id)
    phases = {"plan_s": 0.0, "execute_s": 0.0, "answer_s": 0.0}

    def finish() -> RunRecord:
        if config.record_timing:
            rec.timing = dict(phases, wall_s=sum(phases.values()))
        return rec

    t0 = time.perf_counter()
    try:
        outcome = plan_with_verification(provider, query, graph, config, few_shot=few_shot)
    except PlanningExhausted as exc:
        phases["plan_s"] = time.perf_counter() - t0
        _absorb_planning(rec, exc.outcome)
        rec.error_class = ERROR_PLANNING_EXHAUSTED
        rec.error_detail = str(exc)
        return finish()
    except ProviderError as exc:
        phases["plan_s"] = time.perf_counter() - t0
        rec.error_class = ERROR_PROVIDER
        rec.error_detail = str(exc)
        return finish()
    phases["plan_s"] = time.perf_counter() - t0
    _absorb_planning(rec, outcome)
    rec.plan = plan_to_dict(outcome.plan)

    t0 = time.perf_counter()
    trace = execute_plan(graph, outcome.plan, config, embedder)
    phases["execute_s"] = time.perf_counter() - t0
    rec.trace = trace.to_dict(config.record_timing)
    if trace.status != COMPLETE:
        rec.error_class = ERROR_EXECUTION_BREAK
        rec.error_detail = trace.error
        return finish()

    t0 = time.perf_counter()
    try:
        ans = generate_answer(provider, query, trace, config)
    except ContextWindowExceeded as exc:
        phases["answer_s"] = time.perf_counter() - t0
        rec.error_class = ERROR_CONTEXT_WINDOW
        rec.error_detail = str(exc)
        rec.trace["status"] = CONTEXT_WINDOW_EXCEEDED
        return finish()
    except ProviderError as exc:
        phases["answer_s"] = time.perf_counter() - t0
        rec.provider_calls += 1
        rec.error_class = ERROR_PROVIDER
        rec.error_detail = str(exc)
        return finish()
    phases["answer_s"] = time.perf_counter() - t0
    rec.provider_calls += 1
    rec.answer = ans.answer
    rec.input_tokens += ans.token_usage[0]
    rec.output_tokens += ans.token_usage[1]
    rec.context_nodes_sent = ans.context_nodes_sent
    rec.context_reduced = ans.context_reduced
    if rec.hallucinations_blocked:
        rec.error_class = ERROR_HALLUCINATION_BLOCKED
    return finish()


def _absorb_planning(rec: RunRecord, outcome) -> None:
    rec.attempts = [a.to_dict() for a in outcome.log]
    rec.provider_calls += outcome.attempts
    rec.input_tokens += outcome.token_usage[0]
    rec.output_tokens += outcome.token_usage[1]
    rec.hallucinations_blocked = outcome.blocked
