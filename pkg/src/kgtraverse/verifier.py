"""Static plan verification against the action catalogue and the graph schema.

Each step's possible output node types are propagated through the plan. A plan
passes when no step produces a fatal finding; instance data is never consulted.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .actions import ACTION_CATALOG, DEFAULT_MAX_HOPS
from .graph_store import GraphSchema
from .plan import (
    FetchNeighborsParams,
    FindCommonNodesParams,
    FindNodeParams,
    PlanStep,
    TraversalPlan,
)

FATAL = "fatal"
WARNING = "warning"

RULES = (
    "unknown-action",
    "bad-params",
    "unknown-node-type",
    "unknown-edge-type",
    "edge-not-connected-to-source-type",
    "target-type-unreachable",
    "common-nodes-type-mismatch",
)

_EXPECTED = {
    "find_node": FindNodeParams,
    "fetch_neighbors": FetchNeighborsParams,
    "find_common_nodes": FindCommonNodesParams,
}


@dataclass(frozen=True)
class VerificationFinding:
    step_id: str
    severity: str
    rule: str
    message: str
    offending: str | None = None
    alternatives: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "step_id": self.step_id,
            "severity": self.severity,
            "rule": self.rule,
            "message": self.message,
            "offending": self.offending,
            "alternatives": list(self.alternatives),
        }


@dataclass(frozen=True)
class VerificationReport:
    findings: tuple[VerificationFinding, ...]
    type_state: dict[str, frozenset[str]] = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "fail" if self.fatal else "pass"

    @property
    def passed(self) -> bool:
        return not self.fatal

    @property
    def fatal(self) -> list[VerificationFinding]:
        return [f for f in self.findings if f.severity == FATAL]

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "findings": [f.to_dict() for f in self.findings],
            "type_state": {k: sorted(v) for k, v in self.type_state.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False)


def type_distances(schema: GraphSchema, sources: Iterable[str], target: str, max_hops: int) -> int | None:
    """Fewest type-level hops (1..max_hops) from any source type to ``target``.

    Expansion stops at ``target``, mirroring the instance-level traversal.
    """
    best = None
    for s in sources:
        seen = set()
        frontier = {s}
        for depth in range(1, max_hops + 1):
            nxt = set()
            for t in frontier:
                nxt |= schema.type_successors(t)
            if target in nxt:
                best = depth if best is None else min(best, depth)
                break
            nxt -= seen
            seen |= nxt
            frontier = nxt
            if not frontier:
                break
    return best


class _Checker:
    def __init__(self, schema: GraphSchema, catalog, default_max_hops: int):
        self.schema = schema
        self.catalog = catalog
        self.default_max_hops = default_max_hops
        self.findings: list[VerificationFinding] = []
        self.types: dict[str, frozenset[str]] = {}
        self.failed: set[str] = set()

    def fatal(self, step: PlanStep, rule: str, message: str, offending=None, alternatives=()):
        self.findings.append(
            VerificationFinding(step.step_id, FATAL, rule, message, offending, tuple(alternatives))
        )

    def warn(self, step: PlanStep, rule: str, message: str, offending=None):
        self.findings.append(VerificationFinding(step.step_id, WARNING, rule, message, offending))

    def source_types(self, ref: str) -> frozenset[str] | None:
        # None when the referenced step failed; an upstream finding already explains why
        return self.types.get(ref)

    def edge_targets(self, step: PlanStep, src_types: frozenset[str] | None, edge: str, ref: str) -> set[str] | None:
        if edge not in self.schema.edge_type_names:
            self.fatal(
                step,
                "unknown-edge-type",
                f"step {step.step_id}: edge type {edge!r} does not exist in the graph",
                edge,
                self._leaving(src_types) if src_types else sorted(self.schema.edge_type_names),
            )
            return None
        if src_types is None:
            return None
        targets = set()
        for t in src_types:
            targets |= self.schema.step_targets(t, edge)
        if not targets:
            self.fatal(
                step,
                "edge-not-connected-to-source-type",
                f"step {step.step_id}: edge type {edge!r} does not leave node type(s) "
                f"{', '.join(sorted(src_types))} produced by step {ref}",
                edge,
                self._leaving(src_types),
            )
            return None
        return targets

    def _leaving(self, types) -> list[str]:
        names = set()
        for t in types:
            names.update(self.schema.edges_leaving(t))
        return sorted(names)

    def check(self, step: PlanStep) -> None:
        self._check(step)
        if step.step_id not in self.types:
            self.failed.add(step.step_id)

    def _check(self, step: PlanStep) -> None:
        if step.action not in self.catalog:
            self.fatal(
                step,
                "unknown-action",
                f"step {step.step_id}: action {step.action!r} is not one of {', '.join(sorted(self.catalog))}",
                step.action,
                sorted(self.catalog),
            )
            return
        expected = _EXPECTED.get(step.action)
        if expected is None or not isinstance(step.params, expected):
            self.fatal(step, "bad-params", f"step {step.step_id}: params do not match action {step.action!r}")
            return
        for ref in step.refs():
            if ref not in self.types and ref not in self.failed:
                self.fatal(step, "bad-params", f"step {step.step_id}: reference to unknown step {ref!r}", ref)
                return
        p = step.params
        if isinstance(p, FindNodeParams):
            if p.node_type not in self.schema.node_types:
                self.fatal(
                    step,
                    "unknown-node-type",
                    f"step {step.step_id}: node type {p.node_type!r} does not exist in the graph",
                    p.node_type,
                    sorted(self.schema.node_types),
                )
                return
            self.types[step.step_id] = frozenset({p.node_type})
        elif isinstance(p, FetchNeighborsParams):
            src = self.source_types(p.source)
            if p.param.kind == "edge_type":
                targets = self.edge_targets(step, src, p.param.name, p.source)
                if targets:
                    self.types[step.step_id] = frozenset(targets)
                return
            target = p.param.name
            if target not in self.schema.node_types:
                self.fatal(
                    step,
                    "unknown-node-type",
                    f"step {step.step_id}: node type {target!r} does not exist in the graph",
                    target,
                    sorted(self.schema.node_types),
                )
                return
            if src is None:
                return
            hops = p.max_hops if p.max_hops is not None else self.default_max_hops
            dist = type_distances(self.schema, sorted(src), target, hops)
            if dist is None:
                self.fatal(
                    step,
                    "target-type-unreachable",
                    f"step {step.step_id}: node type {target!r} is not reachable from "
                    f"{', '.join(sorted(src))} within {hops} hops",
                    target,
                    self._reachable(src, hops),
                )
                return
            if dist == hops and hops > 1:
                self.warn(
                    step,
                    "target-type-unreachable",
                    f"step {step.step_id}: node type {target!r} is reachable only at the hop limit ({hops})",
                    target,
                )
            self.types[step.step_id] = frozenset({target})
        else:
            sets = []
            ok = True
            for item in p.inputs:
                targets = self.edge_targets(step, self.source_types(item.source), item.edge_type, item.source)
                if targets is None:
                    ok = False
                else:
                    sets.append(targets)
            if not ok:
                return
            common = set.intersection(*sets)
            if not common:
                self.fatal(
                    step,
                    "common-nodes-type-mismatch",
                    f"step {step.step_id}: inputs lead to disjoint node types "
                    + "; ".join(f"{i.source}-[{i.edge_type}]->{{{', '.join(sorted(s))}}}" for i, s in zip(p.inputs, sets)),
                    ", ".join(i.edge_type for i in p.inputs),
                )
                return
            self.types[step.step_id] = frozenset(common)

    def _reachable(self, src, hops) -> list[str]:
        out = set()
        for t in self.schema.node_types:
            if type_distances(self.schema, sorted(src), t, hops) is not None:
                out.add(t)
        return sorted(out)


def verify_plan(
    plan: TraversalPlan,
    schema: GraphSchema,
    action_catalog=ACTION_CATALOG,
    default_max_hops: int = DEFAULT_MAX_HOPS,
) -> VerificationReport:
    checker = _Checker(schema, frozenset(action_catalog), default_max_hops)
    for step in plan.steps:
        checker.check(step)
    return VerificationReport(tuple(checker.findings), dict(checker.types))


class FeedbackError(ValueError):
    pass


def feedback_for_retry(report: VerificationReport) -> str:
    """One line per fatal finding, in plan order, with valid alternatives where known."""
    if report.passed:
        raise FeedbackError("feedback requested for a passing report")
    lines = []
    for f in report.fatal:
        line = f"- step {f.step_id} [{f.rule}]: {f.message}"
        if f.alternatives:
            line += f". Valid options: {', '.join(f.alternatives)}"
        lines.append(line)
    return "\n".join(lines)
