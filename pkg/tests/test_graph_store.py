import json
import random

import pytest
from hypothesis import given, strategies as st

from kgtraverse.graph_store import (
    Edge,
    GraphFormatError,
    GraphSchema,
    KnowledgeGraph,
    Node,
    SchemaViolation,
    UnknownNodeError,
    UnknownTypeError,
    build_adjacency,
    dump_graph,
    infer_schema,
    load_graph,
    neighbors,
)

from helpers import oracle_neighbors, random_graph


def doc(nodes, edges, schema=None):
    out = {"nodes": nodes, "edges": edges}
    if schema is not None:
        out["schema"] = schema
    return json.dumps(out)


def test_empty_graph():
    g = load_graph(doc([], []))
    assert len(g) == 0 and len(g.edges) == 0


def test_inferred_schema_from_two_nodes():
    g = load_graph(doc(
        [{"id": "p", "type": "paper", "attributes": {"title": "T"}}, {"id": "a", "type": "author", "attributes": {"name": "N"}}],
        [{"source": "p", "target": "a", "type": "written-by"}],
    ))
    # one-pass scan of the observed type names
    assert set(g.schema.node_types) == {"paper", "author"}
    assert {(s.name, s.source, s.target) for s in g.schema.edge_types} == {("written-by", "paper", "author")}
    assert all(s.bidirectional for s in g.schema.edge_types)


def test_missing_node_reference_is_a_violation():
    with pytest.raises(SchemaViolation, match="missing node 'zz'"):
        load_graph(doc([{"id": "p", "type": "paper"}], [{"source": "p", "target": "zz", "type": "cites"}]))


def test_malformed_json_reports_position():
    with pytest.raises(GraphFormatError, match="line 1 column"):
        load_graph('{"nodes": [')


def test_declared_schema_wins_and_is_enforced():
    schema = {"node_types": {"paper": [], "author": []},
              "edge_types": [{"name": "written-by", "source": "paper", "target": "author", "bidirectional": False}]}
    nodes = [{"id": "p", "type": "paper"}, {"id": "a", "type": "author"}]
    with pytest.raises(SchemaViolation, match="connects 'author' to 'paper'"):
        load_graph(doc(nodes, [{"source": "a", "target": "p", "type": "written-by"}], schema))
    with pytest.raises(SchemaViolation, match="undeclared type 'venue'"):
        load_graph(doc(nodes + [{"id": "v", "type": "venue"}], [], schema))


def test_schema_rejects_bad_records():
    with pytest.raises(SchemaViolation):
        GraphSchema.from_dict({"node_types": {"a": []}, "edge_types": [{"name": "x", "source": "a", "target": "b"}]})
    with pytest.raises(SchemaViolation, match="duplicate"):
        GraphSchema.from_dict({"node_types": {"a": []}, "edge_types": [
            {"name": "x", "source": "a", "target": "a"}, {"name": "x", "source": "a", "target": "a"}]})


def test_infer_schema_examples():
    s = infer_schema([Node("p", "paper", {"title": "x"})], [])
    assert dict(s.node_types) == {"paper": ("title",)} and s.edge_types == ()
    nodes = [Node("A", "paper"), Node("B", "paper"), Node("C", "author")]
    edges = [Edge("A", "B", "cites"), Edge("A", "C", "written-by"), Edge("A", "B", "cites")]
    s = infer_schema(nodes, edges)
    assert {s_.key for s_ in s.edge_types} == {("cites", "paper", "paper"), ("written-by", "paper", "author")}
    with pytest.raises(SchemaViolation):
        infer_schema(nodes, [Edge("A", "Q", "cites")])


def test_neighbors_examples():
    schema = GraphSchema.from_dict({"node_types": {"paper": [], "author": []}, "edge_types": [
        {"name": "cites", "source": "paper", "target": "paper", "bidirectional": False},
        {"name": "written-by", "source": "paper", "target": "author", "bidirectional": False}]})
    g = KnowledgeGraph(
        [Node("A", "paper"), Node("B", "paper"), Node("C", "paper"), Node("D", "author"), Node("E", "paper")],
        [Edge("A", "B", "cites"), Edge("A", "C", "cites"), Edge("A", "D", "written-by")], schema)
    assert neighbors(g, "A", "cites") == {"B", "C"}
    assert neighbors(g, "B", "cites") == set()
    assert neighbors(g, "E", "cites") == set()
    with pytest.raises(UnknownNodeError):
        neighbors(g, "Z", "cites")
    with pytest.raises(UnknownTypeError):
        neighbors(g, "A", "likes")


def test_bidirectional_flag_walks_backwards(toy_graph):
    assert neighbors(toy_graph, "a1", "written-by") == {"p1", "p2", "p6"}
    assert neighbors(toy_graph, "p3", "cites") == set()


def test_graph_is_immutable(toy_graph):
    with pytest.raises(TypeError):
        toy_graph.nodes["x"] = None
    with pytest.raises(TypeError):
        toy_graph.nodes["p1"].attributes["title"] = "changed"


def test_parallel_edges_of_same_type_collapse():
    g = KnowledgeGraph([Node("a", "t"), Node("b", "t")], [Edge("a", "b", "r"), Edge("a", "b", "r"), Edge("a", "b", "s")])
    assert len(g.edges) == 2


@given(st.integers(0, 10_000))
def test_adjacency_rebuild_and_neighbour_scan(seed):
    g = random_graph(random.Random(seed), max_nodes=25)
    assert build_adjacency(g.nodes, g.edges, g.schema) == g.adjacency
    for v in g.nodes:
        for name in g.schema.edge_type_names:
            got = neighbors(g, v, name)
            assert got <= set(g.nodes)
            assert got == oracle_neighbors(g, v, name)


@given(st.integers(0, 10_000))
def test_round_trip_and_inferred_schema_validates(seed):
    g = random_graph(random.Random(seed), max_nodes=25)
    again = load_graph(dump_graph(g))
    assert set(again.nodes) == set(g.nodes)
    assert sorted(again.edges) == sorted(g.edges)
    assert again.schema == g.schema
    inferred = infer_schema(g.nodes.values(), g.edges)
    KnowledgeGraph(g.nodes.values(), g.edges, inferred)
