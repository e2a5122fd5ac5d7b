import json

import pytest

from kgtraverse.graph_store import GraphFormatError, load_graph
from kgtraverse.grbench import convert_graph, convert_questions, read_qa_file

DUMP = {
    "author_nodes": {
        "a1": {"features": {"name": "Alice"}, "neighbors": {"paper": ["p1", "p9"]}},
    },
    "paper_nodes": {
        "p1": {"features": {"title": "Graphs", "year": 2021}, "neighbors": {"author": ["a1"]}},
    },
}


def test_convert_graph():
    graph = load_graph(convert_graph(DUMP))
    assert set(graph.nodes) == {"a1", "p1"}
    assert graph.nodes["p1"].attributes == {"title": "Graphs", "year": "2021"}
    assert {(e.source, e.target, e.edge_type) for e in graph.edges} == {("a1", "p1", "paper"), ("p1", "a1", "author")}
    assert all(not s.bidirectional for s in graph.schema.edge_types)
    assert graph.schema.summary() == "2 node types, 2 edge types"


def test_convert_graph_rejects_bad_keys():
    with pytest.raises(GraphFormatError, match="unexpected top-level key"):
        convert_graph({"authors": {}})
    with pytest.raises(GraphFormatError, match="appears under both"):
        convert_graph({"a_nodes": {"x": {}}, "b_nodes": {"x": {}}})


def test_convert_questions(tmp_path):
    p = tmp_path / "qa.jsonl"
    p.write_text(json.dumps({"qid": 7, "question": "who?", "answer": ["A", "B"]}) + "\n")
    assert convert_questions(read_qa_file(p)) == [{"id": "7", "question": "who?", "answer": "A, B"}]
    p.write_text(json.dumps([{"question": "x", "answer": 3}]))
    assert convert_questions(read_qa_file(p)) == [{"id": "0", "question": "x", "answer": "3"}]
