"""Traversal plans: step records, lenient parsing of planner output, canonical serialisation.

Wire format::

    {"query": str, "rationale": str (optional),
     "steps": [{"id": str, "action": str, "params": {...}}]}

Params per action:

* ``find_node``: ``{"hint": str, "node_type": str}``
* ``fetch_neighbors``: ``{"source": step_id, "edge_type": str}`` or
  ``{"source": step_id, "node_type": str, "max_hops": int (optional)}``
* ``find_common_nodes``: ``{"inputs": [{"source": step_id, "edge_type": str}, ...]}``

Steps naming any other action are kept with their raw params so the verifier can
report them; structural checks here cover only the known actions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Mapping, Union

from .actions import TraversalParam


class PlanFormatError(ValueError):
    """Planner output could not be turned into a structurally valid plan.

    ``feedback`` is a short text meant to be handed back to the planner.
    """

    def __init__(self, message: str, step_id: str | None = None, position: int | None = None):
        super().__init__(message)
        self.step_id = step_id
        self.position = position

    @property
    def feedback(self) -> str:
        where = f" (step {self.step_id})" if self.step_id else ""
        return f"The previous plan could not be parsed{where}: {self}"


@dataclass(frozen=True)
class FindNodeParams:
    hint: str
    node_type: str


@dataclass(frozen=True)
class FetchNeighborsParams:
    source: str
    param: TraversalParam
    max_hops: int | None = None


@dataclass(frozen=True)
class CommonInput:
    source: str
    edge_type: str


@dataclass(frozen=True)
class FindCommonNodesParams:
    inputs: tuple[CommonInput, ...]


StepParams = Union[FindNodeParams, FetchNeighborsParams, FindCommonNodesParams, Mapping[str, Any]]


@dataclass(frozen=True)
class PlanStep:
    step_id: str
    action: str
    params: StepParams

    def refs(self) -> list[str]:
        if isinstance(self.params, FetchNeighborsParams):
            return [self.params.source]
        if isinstance(self.params, FindCommonNodesParams):
            return [i.source for i in self.params.inputs]
        return []


@dataclass(frozen=True)
class TraversalPlan:
    query: str
    steps: tuple[PlanStep, ...]
    rationale: str | None = None

    def step(self, step_id: str) -> PlanStep:
        for s in self.steps:
            if s.step_id == step_id:
                return s
        raise KeyError(step_id)


def params_to_dict(step: PlanStep) -> dict:
    p = step.params
    if isinstance(p, FindNodeParams):
        return {"hint": p.hint, "node_type": p.node_type}
    if isinstance(p, FetchNeighborsParams):
        out = {"source": p.source, p.param.kind: p.param.name}
        if p.max_hops is not None:
            out["max_hops"] = p.max_hops
        return out
    if isinstance(p, FindCommonNodesParams):
        return {"inputs": [{"source": i.source, "edge_type": i.edge_type} for i in p.inputs]}
    return json.loads(json.dumps(dict(p), sort_keys=True))


def plan_to_dict(plan: TraversalPlan) -> dict:
    doc: dict[str, Any] = {"query": plan.query}
    if plan.rationale is not None:
        doc["rationale"] = plan.rationale
    doc["steps"] = [{"id": s.step_id, "action": s.action, "params": params_to_dict(s)} for s in plan.steps]
    return doc


def serialize_plan(plan: TraversalPlan) -> str:
    return json.dumps(plan_to_dict(plan), indent=2, ensure_ascii=False, sort_keys=False)


def _extract_document(text: str) -> tuple[dict, int]:
    decoder = json.JSONDecoder()
    first_error: json.JSONDecodeError | None = None
    pos = text.find("{")
    while pos != -1:
        try:
            doc, _ = decoder.raw_decode(text, pos)
        except json.JSONDecodeError as exc:
            if first_error is None and '"steps"' in text[pos:]:
                first_error = exc
        else:
            if isinstance(doc, dict) and "steps" in doc:
                return doc, pos
        pos = text.find("{", pos + 1)
    if first_error is not None:
        raise PlanFormatError(
            f"malformed plan document at line {first_error.lineno} column {first_error.colno}: {first_error.msg}",
            position=first_error.pos,
        )
    raise PlanFormatError('no plan document found; expected a JSON object with a "steps" list')


def _req_str(params: Mapping, key: str, step_id: str, action: str) -> str:
    value = params.get(key)
    if not isinstance(value, str) or not value:
        raise PlanFormatError(f"{action} step {step_id!r} needs a non-empty string {key!r}", step_id)
    return value


def _check_ref(ref: str, step_id: str, earlier: set[str], all_ids: set[str]) -> None:
    if ref == step_id:
        raise PlanFormatError(f"step {step_id!r} references itself", step_id)
    if ref not in earlier:
        if ref in all_ids:
            raise PlanFormatError(f"step {step_id!r} references later step {ref!r} (forward reference)", step_id)
        raise PlanFormatError(f"step {step_id!r} references unknown step {ref!r}", step_id)


def _parse_params(action: str, params: Mapping, step_id: str, earlier: set[str], all_ids: set[str]) -> StepParams:
    if action == "find_node":
        extra = set(params) - {"hint", "node_type"}
        if extra:
            raise PlanFormatError(f"find_node step {step_id!r} has unexpected params {sorted(extra)}", step_id)
        return FindNodeParams(_req_str(params, "hint", step_id, action), _req_str(params, "node_type", step_id, action))
    if action == "fetch_neighbors":
        extra = set(params) - {"source", "edge_type", "node_type", "max_hops"}
        if extra:
            raise PlanFormatError(f"fetch_neighbors step {step_id!r} has unexpected params {sorted(extra)}", step_id)
        source = _req_str(params, "source", step_id, action)
        _check_ref(source, step_id, earlier, all_ids)
        kinds = [k for k in ("edge_type", "node_type") if k in params]
        if len(kinds) != 1:
            raise PlanFormatError(
                f"fetch_neighbors step {step_id!r} needs exactly one of 'edge_type' or 'node_type'", step_id
            )
        kind = kinds[0]
        name = _req_str(params, kind, step_id, action)
        max_hops = params.get("max_hops")
        if max_hops is not None:
            if kind != "node_type":
                raise PlanFormatError(f"fetch_neighbors step {step_id!r}: max_hops only applies to node_type", step_id)
            if isinstance(max_hops, bool) or not isinstance(max_hops, int) or max_hops < 1:
                raise PlanFormatError(f"fetch_neighbors step {step_id!r}: max_hops must be a positive integer", step_id)
        return FetchNeighborsParams(source, TraversalParam(kind, name), max_hops)
    if action == "find_common_nodes":
        extra = set(params) - {"inputs"}
        if extra:
            raise PlanFormatError(f"find_common_nodes step {step_id!r} has unexpected params {sorted(extra)}", step_id)
        raw = params.get("inputs")
        if not isinstance(raw, list) or len(raw) < 2:
            raise PlanFormatError(f"find_common_nodes step {step_id!r} needs a list of at least 2 inputs", step_id)
        inputs = []
        for item in raw:
            if not isinstance(item, Mapping) or set(item) != {"source", "edge_type"}:
                raise PlanFormatError(
                    f"find_common_nodes step {step_id!r}: each input must be {{\"source\", \"edge_type\"}}", step_id
                )
            src = _req_str(item, "source", step_id, action)
            _check_ref(src, step_id, earlier, all_ids)
            inputs.append(CommonInput(src, _req_str(item, "edge_type", step_id, action)))
        return FindCommonNodesParams(tuple(inputs))
    return dict(params)


def plan_from_dict(doc: Mapping) -> TraversalPlan:
    query = doc.get("query")
    if not isinstance(query, str):
        raise PlanFormatError('plan needs a string "query"')
    rationale = doc.get("rationale")
    if rationale is not None and not isinstance(rationale, str):
        raise PlanFormatError('plan "rationale" must be a string')
    raw_steps = doc.get("steps")
    if not isinstance(raw_steps, list) or not raw_steps:
        raise PlanFormatError('plan needs a non-empty "steps" list')
    all_ids = {s.get("id") for s in raw_steps if isinstance(s, Mapping)}
    earlier: set[str] = set()
    steps = []
    for i, raw in enumerate(raw_steps):
        if not isinstance(raw, Mapping):
            raise PlanFormatError(f"steps[{i}] must be an object")
        step_id = raw.get("id")
        if not isinstance(step_id, str) or not step_id:
            raise PlanFormatError(f"steps[{i}] needs a non-empty string 'id'")
        if step_id in earlier:
            raise PlanFormatError(f"duplicate step id {step_id!r}", step_id)
        action = raw.get("action")
        if not isinstance(action, str) or not action:
            raise PlanFormatError(f"step {step_id!r} needs a string 'action'", step_id)
        if i == 0 and action != "find_node":
            raise PlanFormatError(f"first step must be find_node, got {action!r}", step_id)
        params = raw.get("params", {})
        if not isinstance(params, Mapping):
            raise PlanFormatError(f"step {step_id!r} params must be an object", step_id)
        steps.append(PlanStep(step_id, action, _parse_params(action, params, step_id, earlier, all_ids)))
        earlier.add(step_id)
    return TraversalPlan(query=query, steps=tuple(steps), rationale=rationale)


def parse_plan(text: str) -> TraversalPlan:
    """First plan document found in ``text``, which may wrap it in prose or code fences."""
    doc, _ = _extract_document(text)
    return plan_from_dict(doc)
