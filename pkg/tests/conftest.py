from importlib import resources

import pytest
from hypothesis import settings

from kgtraverse.graph_store import load_graph, load_graph_file

settings.register_profile("ci", max_examples=200, deadline=None)
settings.register_profile("dev", max_examples=50, deadline=None)
settings.load_profile("dev")

DATA = resources.files("kgtraverse.data")


@pytest.fixture(scope="session")
def toy_graph():
    return load_graph_file(DATA / "toy_academic.json")


@pytest.fixture(scope="session")
def toy_questions_path():
    return str(DATA / "toy_academic_questions.jsonl")


@pytest.fixture(scope="session")
def toy_graph_path():
    return str(DATA / "toy_academic.json")


ACADEMIC = {
    "schema": {
        "node_types": {"paper": ["title"], "author": ["name"], "institution": ["name"]},
        "edge_types": [
            {"name": "written-by", "source": "paper", "target": "author", "bidirectional": True},
            {"name": "affiliated-with", "source": "author", "target": "institution", "bidirectional": True},
        ],
    },
    "nodes": [
        {"id": "P1", "type": "paper", "attributes": {"title": "Graph planning"}},
        {"id": "A1", "type": "author", "attributes": {"name": "Ada Lovelace"}},
        {"id": "I1", "type": "institution", "attributes": {"name": "Analytical Institute"}},
    ],
    "edges": [
        {"source": "P1", "target": "A1", "type": "written-by"},
        {"source": "A1", "target": "I1", "type": "affiliated-with"},
    ],
}


@pytest.fixture
def chain_graph():
    return load_graph(ACADEMIC)


# one pass/fail line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, bool]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    number, title = mark.args
    _, ok_before = _CRITERIA.get(number, (title, True))
    _CRITERIA[number] = (title, ok_before and call.excinfo is None)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}")
