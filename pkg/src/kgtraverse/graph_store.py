"""Typed, attributed, directed multigraph with a schema and a per-edge-type adjacency index."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

NodeId = str


class GraphError(Exception):
    """Base class for graph loading and lookup problems."""


class GraphFormatError(GraphError):
    """The graph document does not parse or has the wrong shape."""


class SchemaViolation(GraphError):
    """A node or edge breaks a schema rule."""


class UnknownNodeError(GraphError, KeyError):
    def __str__(self) -> str:
        return self.args[0] if self.args else "unknown node"


class UnknownTypeError(GraphError, KeyError):
    def __str__(self) -> str:
        return self.args[0] if self.args else "unknown type"


@dataclass(frozen=True)
class Node:
    id: NodeId
    node_type: str
    attributes: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True, order=True)
class Edge:
    source: NodeId
    target: NodeId
    edge_type: str


@dataclass(frozen=True, order=True)
class EdgeTypeSpec:
    """One schema record: an edge-type name with its allowed endpoint node types."""

    name: str
    source: str
    target: str
    bidirectional: bool = True

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.name, self.source, self.target)


@dataclass(frozen=True)
class GraphSchema:
    node_types: Mapping[str, tuple[str, ...]]
    edge_types: tuple[EdgeTypeSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "node_types", {t: tuple(k) for t, k in sorted(self.node_types.items())})
        object.__setattr__(self, "edge_types", tuple(sorted(self.edge_types)))
        keys = set()
        for spec in self.edge_types:
            for end in (spec.source, spec.target):
                if end not in self.node_types:
                    raise SchemaViolation(
                        f"edge type {spec.name!r} references undeclared node type {end!r}"
                    )
            if spec.key in keys:
                raise SchemaViolation(f"duplicate edge type record {spec.key}")
            keys.add(spec.key)

    @property
    def edge_type_names(self) -> set[str]:
        return {s.name for s in self.edge_types}

    def edge_spec(self, name: str, source: str, target: str) -> EdgeTypeSpec | None:
        for spec in self.edge_types:
            if spec.key == (name, source, target):
                return spec
        return None

    def step_targets(self, source_type: str, edge_type: str) -> set[str]:
        """Node types reachable from ``source_type`` over one ``edge_type`` hop."""
        out = set()
        for spec in self.edge_types:
            if spec.name != edge_type:
                continue
            if spec.source == source_type:
                out.add(spec.target)
            if spec.bidirectional and spec.target == source_type:
                out.add(spec.source)
        return out

    def type_successors(self, source_type: str) -> set[str]:
        """Node types reachable from ``source_type`` over one hop of any edge type."""
        out = set()
        for spec in self.edge_types:
            if spec.source == source_type:
                out.add(spec.target)
            if spec.bidirectional and spec.target == source_type:
                out.add(spec.source)
        return out

    def edges_leaving(self, source_type: str) -> list[str]:
        """Sorted edge-type names that can be walked from ``source_type``."""
        names = set()
        for spec in self.edge_types:
            if spec.source == source_type or (spec.bidirectional and spec.target == source_type):
                names.add(spec.name)
        return sorted(names)

    def to_dict(self) -> dict:
        return {
            "node_types": {t: list(keys) for t, keys in sorted(self.node_types.items())},
            "edge_types": [
                {"name": s.name, "source": s.source, "target": s.target, "bidirectional": s.bidirectional}
                for s in sorted(self.edge_types)
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> GraphSchema:
        try:
            node_types = doc["node_types"]
            if not isinstance(node_types, Mapping):
                raise GraphFormatError("schema.node_types must be an object")
            nt = {}
            for name, keys in node_types.items():
                if not isinstance(keys, list) or not all(isinstance(k, str) and k for k in keys):
                    raise GraphFormatError(f"schema.node_types[{name!r}] must be a list of non-empty strings")
                nt[str(name)] = tuple(keys)
            specs = []
            for i, rec in enumerate(doc["edge_types"]):
                if not isinstance(rec, Mapping):
                    raise GraphFormatError(f"schema.edge_types[{i}] must be an object")
                for k in ("name", "source", "target"):
                    if not isinstance(rec.get(k), str) or not rec[k]:
                        raise GraphFormatError(f"schema.edge_types[{i}].{k} must be a non-empty string")
                bidi = rec.get("bidirectional", True)
                if not isinstance(bidi, bool):
                    raise GraphFormatError(f"schema.edge_types[{i}].bidirectional must be a boolean")
                specs.append(EdgeTypeSpec(rec["name"], rec["source"], rec["target"], bidi))
        except KeyError as exc:
            raise GraphFormatError(f"schema is missing key {exc.args[0]!r}") from None
        except TypeError as exc:
            raise GraphFormatError(f"malformed schema: {exc}") from None
        return cls(node_types=nt, edge_types=tuple(specs))

    def summary(self) -> str:
        return f"{len(self.node_types)} node types, {len(self.edge_types)} edge types"


def build_adjacency(
    nodes: Mapping[NodeId, Node], edges: Iterable[Edge], schema: GraphSchema
) -> dict[NodeId, dict[str, frozenset[NodeId]]]:
    """Traversable neighbours per node and edge type.

    Reverse entries are added for edges whose schema record is bidirectional.
    """
    index: dict[NodeId, dict[str, set[NodeId]]] = defaultdict(lambda: defaultdict(set))
    bidi = {s.key for s in schema.edge_types if s.bidirectional}
    for e in edges:
        index[e.source][e.edge_type].add(e.target)
        key = (e.edge_type, nodes[e.source].node_type, nodes[e.target].node_type)
        if key in bidi:
            index[e.target][e.edge_type].add(e.source)
    return {v: {t: frozenset(us) for t, us in by_type.items()} for v, by_type in index.items()}


class KnowledgeGraph:
    """Immutable knowledge graph. Build through :func:`load_graph` or the constructor."""

    def __init__(self, nodes: Iterable[Node], edges: Iterable[Edge], schema: GraphSchema | None = None):
        node_map: dict[NodeId, Node] = {}
        for n in nodes:
            if not n.id:
                raise SchemaViolation("node id must be non-empty")
            if n.id in node_map:
                raise SchemaViolation(f"duplicate node id {n.id!r}")
            node_map[n.id] = Node(n.id, n.node_type, MappingProxyType(dict(n.attributes)))
        # parallel edges of the same type collapse; order is kept for round-trips
        edge_list = list(dict.fromkeys(edges))
        for e in edge_list:
            for end in (e.source, e.target):
                if end not in node_map:
                    raise SchemaViolation(f"edge {e.source}-[{e.edge_type}]->{e.target} references missing node {end!r}")
        if schema is None:
            schema = infer_schema(node_map.values(), edge_list)
        _validate_instance(node_map, edge_list, schema)
        self._nodes = MappingProxyType(node_map)
        self._edges = tuple(edge_list)
        self._schema = schema
        self._adjacency = build_adjacency(node_map, edge_list, schema)
        by_type: dict[str, list[NodeId]] = defaultdict(list)
        for nid in sorted(node_map):
            by_type[node_map[nid].node_type].append(nid)
        self._by_type = {t: tuple(ids) for t, ids in by_type.items()}

    @property
    def nodes(self) -> Mapping[NodeId, Node]:
        return self._nodes

    @property
    def edges(self) -> tuple[Edge, ...]:
        return self._edges

    @property
    def schema(self) -> GraphSchema:
        return self._schema

    @property
    def adjacency(self) -> Mapping[NodeId, Mapping[str, frozenset[NodeId]]]:
        return self._adjacency

    def node(self, v: NodeId) -> Node:
        try:
            return self._nodes[v]
        except KeyError:
            raise UnknownNodeError(f"unknown node {v!r}") from None

    def nodes_of_type(self, node_type: str) -> tuple[NodeId, ...]:
        if node_type not in self._schema.node_types:
            raise UnknownTypeError(f"unknown node type {node_type!r}")
        return self._by_type.get(node_type, ())

    def __len__(self) -> int:
        return len(self._nodes)

    def __contains__(self, v) -> bool:
        return v in self._nodes

    def to_dict(self) -> dict:
        return {
            "schema": self._schema.to_dict(),
            "nodes": [
                {"id": n.id, "type": n.node_type, "attributes": dict(sorted(n.attributes.items()))}
                for n in self._nodes.values()
            ],
            "edges": [{"source": e.source, "target": e.target, "type": e.edge_type} for e in self._edges],
        }


def _validate_instance(nodes: Mapping[NodeId, Node], edges: list[Edge], schema: GraphSchema) -> None:
    for n in nodes.values():
        if n.node_type not in schema.node_types:
            raise SchemaViolation(f"node {n.id!r} has undeclared type {n.node_type!r}")
        for k in n.attributes:
            if not k:
                raise SchemaViolation(f"node {n.id!r} has an empty attribute key")
    allowed = {s.key for s in schema.edge_types}
    names = schema.edge_type_names
    for e in edges:
        if e.edge_type not in names:
            raise SchemaViolation(f"edge {e.source}-[{e.edge_type}]->{e.target} has undeclared type {e.edge_type!r}")
        key = (e.edge_type, nodes[e.source].node_type, nodes[e.target].node_type)
        if key not in allowed:
            raise SchemaViolation(
                f"edge {e.source}-[{e.edge_type}]->{e.target} connects {key[1]!r} to {key[2]!r}, "
                f"which no {e.edge_type!r} record allows"
            )


def infer_schema(nodes: Iterable[Node], edges: Iterable[Edge]) -> GraphSchema:
    """Schema made of the distinct types observed; inferred edge types are bidirectional."""
    node_keys: dict[str, set[str]] = {}
    types: dict[NodeId, str] = {}
    for n in nodes:
        node_keys.setdefault(n.node_type, set()).update(n.attributes)
        types[n.id] = n.node_type
    triples = set()
    for e in edges:
        try:
            triples.add((e.edge_type, types[e.source], types[e.target]))
        except KeyError as exc:
            raise SchemaViolation(f"edge {e.source}-[{e.edge_type}]->{e.target} references missing node {exc.args[0]!r}") from None
    return GraphSchema(
        node_types={t: tuple(sorted(keys)) for t, keys in sorted(node_keys.items())},
        edge_types=tuple(EdgeTypeSpec(*t, bidirectional=True) for t in sorted(triples)),
    )


def neighbors(graph: KnowledgeGraph, v: NodeId, edge_type: str) -> frozenset[NodeId]:
    graph.node(v)
    if edge_type not in graph.schema.edge_type_names:
        raise UnknownTypeError(f"unknown edge type {edge_type!r}")
    return graph.adjacency.get(v, {}).get(edge_type, frozenset())


def _parse_document(source: str | bytes | Mapping) -> Mapping:
    if isinstance(source, Mapping):
        return source
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise GraphFormatError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise GraphFormatError("graph document must be a JSON object")
    return doc


def load_graph(source: str | bytes | Mapping, schema: GraphSchema | None = None) -> KnowledgeGraph:
    """Parse graph-file content. A schema given here overrides one embedded in the document."""
    doc = _parse_document(source)
    for key in ("nodes", "edges"):
        if not isinstance(doc.get(key), list):
            raise GraphFormatError(f"graph document needs a list under {key!r}")
    if schema is None and doc.get("schema") is not None:
        schema = GraphSchema.from_dict(doc["schema"])
    nodes = []
    for i, rec in enumerate(doc["nodes"]):
        if not isinstance(rec, Mapping) or not isinstance(rec.get("id"), str) or not isinstance(rec.get("type"), str):
            raise GraphFormatError(f"nodes[{i}] needs string 'id' and 'type'")
        attrs = rec.get("attributes", {})
        if not isinstance(attrs, Mapping):
            raise GraphFormatError(f"nodes[{i}].attributes must be an object")
        nodes.append(Node(rec["id"], rec["type"], {str(k): as_text(v) for k, v in attrs.items()}))
    edges = []
    for i, rec in enumerate(doc["edges"]):
        if not isinstance(rec, Mapping) or not all(isinstance(rec.get(k), str) for k in ("source", "target", "type")):
            raise GraphFormatError(f"edges[{i}] needs string 'source', 'target' and 'type'")
        edges.append(Edge(rec["source"], rec["target"], rec["type"]))
    return KnowledgeGraph(nodes, edges, schema)


def as_text(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, float, bool)) or value is None:
        return json.dumps(value)
    return json.dumps(value, sort_keys=True, ensure_ascii=False)


def load_graph_file(path: str | Path, schema: GraphSchema | None = None) -> KnowledgeGraph:
    return load_graph(Path(path).read_text(encoding="utf-8"), schema)


def dump_graph(graph: KnowledgeGraph) -> str:
    return json.dumps(graph.to_dict(), indent=2, ensure_ascii=False) + "\n"
