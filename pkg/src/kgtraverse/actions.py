"""The three traversal actions: find_node, fetch_neighbors and find_common_nodes."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .graph_store import KnowledgeGraph, NodeId, UnknownTypeError, neighbors
from .similarity import Embedder, SimilarityConfig, default_embedder, node_text, similarity

ACTION_CATALOG = frozenset({"find_node", "fetch_neighbors", "find_common_nodes"})

DEFAULT_MAX_HOPS = 3
DEFAULT_STEP_CAP = 200


class ActionError(ValueError):
    """An action was invoked with parameters the graph cannot honour."""


@dataclass(frozen=True)
class TraversalParam:
    kind: str  # "edge_type" or "node_type"
    name: str

    def __post_init__(self):
        if self.kind not in ("edge_type", "node_type"):
            raise ValueError(f"traversal param kind must be edge_type or node_type, got {self.kind!r}")


@dataclass(frozen=True)
class NodeSet:
    members: frozenset[NodeId]
    provenance: str | None = None
    truncated: bool = False
    below_threshold: bool = False
    no_candidates: bool = False
    scores: tuple[tuple[NodeId, float], ...] = ()

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(sorted(self.members))

    def __contains__(self, v) -> bool:
        return v in self.members


def _capped(members: Iterable[NodeId], cap: int | None, provenance, **flags) -> NodeSet:
    members = set(members)
    truncated = False
    if cap is not None and len(members) > cap:
        members = set(sorted(members)[:cap])
        truncated = True
    return NodeSet(frozenset(members), provenance, truncated=truncated, **flags)


def find_node(
    graph: KnowledgeGraph,
    hint: str,
    node_type: str,
    config: SimilarityConfig = SimilarityConfig(),
    embedder: Embedder | None = None,
    provenance: str | None = None,
) -> NodeSet:
    """Nodes of ``node_type`` whose canonical text scores at least theta against ``hint``.

    At most ``config.top_k`` members are kept, best first with ties broken by node id.
    When nothing clears theta the single best scorer is returned with ``below_threshold``
    set, so a plan never dead-ends on an unlucky hint.
    """
    if not hint:
        raise ActionError("find_node needs a non-empty hint")
    try:
        candidates = graph.nodes_of_type(node_type)
    except UnknownTypeError as exc:
        raise ActionError(str(exc)) from None
    if not candidates:
        return NodeSet(frozenset(), provenance, no_candidates=True)
    embedder = embedder or default_embedder()
    h = embedder.embed(hint)
    vectors = embedder.embed_many([node_text(graph.nodes[v].attributes) for v in candidates])
    scored = sorted(((-similarity(h, x), v) for v, x in zip(candidates, vectors)))
    ranked = [(v, -s) for s, v in scored]
    hits = [(v, s) for v, s in ranked if s >= config.theta]
    below = False
    if not hits:
        hits = ranked[:1]
        below = True
    if config.top_k is not None:
        hits = hits[: config.top_k]
    return NodeSet(frozenset(v for v, _ in hits), provenance, below_threshold=below, scores=tuple(hits))


def _check_sources(graph: KnowledgeGraph, sources: Iterable[NodeId]) -> None:
    for v in sources:
        if v not in graph:
            raise ActionError(f"unknown node {v!r}")


def fetch_neighbors(
    graph: KnowledgeGraph,
    sources: NodeSet | Iterable[NodeId],
    param: TraversalParam,
    max_hops: int = DEFAULT_MAX_HOPS,
    cap: int | None = DEFAULT_STEP_CAP,
    provenance: str | None = None,
    allow_empty: bool = False,
) -> NodeSet:
    """Neighbours of ``sources`` over one edge type, or the nearest nodes of a node type.

    Edge-type param: one hop, union over sources. Node-type param: per source, breadth
    first up to ``max_hops`` hops over any edge type, never expanding past a node of the
    target type; the source itself is not part of its own result.
    """
    src = sources.members if isinstance(sources, NodeSet) else frozenset(sources)
    if not src and not allow_empty:
        raise ActionError("fetch_neighbors needs a non-empty source set")
    _check_sources(graph, src)
    schema = graph.schema
    if param.kind == "edge_type":
        if param.name not in schema.edge_type_names:
            raise ActionError(f"unknown edge type {param.name!r}")
        out: set[NodeId] = set()
        for v in src:
            out |= neighbors(graph, v, param.name)
        return _capped(out, cap, provenance)
    if param.name not in schema.node_types:
        raise ActionError(f"unknown node type {param.name!r}")
    if max_hops < 1:
        raise ActionError(f"max_hops must be >= 1, got {max_hops}")
    out = set()
    for v in src:
        out |= _reach_type(graph, v, param.name, max_hops)
    return _capped(out, cap, provenance)


def _reach_type(graph: KnowledgeGraph, start: NodeId, target_type: str, max_hops: int) -> set[NodeId]:
    adjacency = graph.adjacency
    nodes = graph.nodes
    seen = {start}
    found = set()
    frontier = deque([(start, 0)])
    while frontier:
        v, depth = frontier.popleft()
        if depth == max_hops:
            continue
        for us in adjacency.get(v, {}).values():
            for u in us:
                if u in seen:
                    continue
                seen.add(u)
                if nodes[u].node_type == target_type:
                    found.add(u)
                else:
                    frontier.append((u, depth + 1))
    return found


def find_common_nodes(
    graph: KnowledgeGraph,
    inputs: Sequence[tuple[NodeSet | Iterable[NodeId], str]],
    cap: int | None = DEFAULT_STEP_CAP,
    provenance: str | None = None,
) -> NodeSet:
    """Intersection over inputs of each input set's one-hop neighbours via its edge type."""
    if len(inputs) < 2:
        raise ActionError(f"find_common_nodes needs at least 2 inputs, got {len(inputs)}")
    names = graph.schema.edge_type_names
    per_input = []
    for members, edge_type in inputs:
        if edge_type not in names:
            raise ActionError(f"unknown edge type {edge_type!r}")
        src = members.members if isinstance(members, NodeSet) else frozenset(members)
        _check_sources(graph, src)
        reached: set[NodeId] = set()
        for v in src:
            reached |= neighbors(graph, v, edge_type)
        per_input.append(reached)
    common = set.intersection(*per_input)
    return _capped(common, cap, provenance)
