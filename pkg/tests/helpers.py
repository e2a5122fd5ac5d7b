"""Random graph / plan generators and brute-force oracles shared by the tests.

The oracles deliberately avoid the adjacency index and numpy: they scan the edge list
and score with plain Python.
"""

from __future__ import annotations

import math
import random
from collections import Counter

from kgtraverse.graph_store import Edge, EdgeTypeSpec, GraphSchema, KnowledgeGraph, Node
from kgtraverse.plan import (
    CommonInput,
    FetchNeighborsParams,
    FindCommonNodesParams,
    FindNodeParams,
    PlanStep,
    TraversalPlan,
)
from kgtraverse.actions import TraversalParam
from kgtraverse.similarity import DEFAULT_DIM, node_text, token_bucket, tokenize

WORDS = (
    "graph river stone planning query neural lattice amber cobalt delta ember fjord "
    "granite harbor iris juniper kelp lumen maple nectar onyx pine quartz raven"
).split()


def random_schema(rng: random.Random, max_node_types=4, max_edge_types=6) -> GraphSchema:
    ntypes = [f"t{i}" for i in range(rng.randint(1, max_node_types))]
    names = [f"e{i}" for i in range(rng.randint(1, max_edge_types))]
    records = {}
    for name in names:
        for _ in range(rng.randint(1, 2)):
            s, t = rng.choice(ntypes), rng.choice(ntypes)
            records[(name, s, t)] = EdgeTypeSpec(name, s, t, rng.random() < 0.5)
    node_types = {t: ("name",) for t in ntypes}
    return GraphSchema(node_types=node_types, edge_types=tuple(records.values()))


def random_graph(rng: random.Random, schema: GraphSchema | None = None, max_nodes=50, max_edges=None) -> KnowledgeGraph:
    schema = schema or random_schema(rng)
    ntypes = sorted(schema.node_types)
    n = rng.randint(0, max_nodes)
    nodes = []
    for i in range(n):
        words = rng.sample(WORDS, rng.randint(1, 3))
        nodes.append(Node(f"n{i:02d}", rng.choice(ntypes), {"name": " ".join(words)}))
    by_type = {}
    for node in nodes:
        by_type.setdefault(node.node_type, []).append(node.id)
    edges = []
    specs = [s for s in schema.edge_types if by_type.get(s.source) and by_type.get(s.target)]
    m = rng.randint(0, max_edges if max_edges is not None else 2 * n)
    for _ in range(m if specs else 0):
        spec = rng.choice(specs)
        edges.append(Edge(rng.choice(by_type[spec.source]), rng.choice(by_type[spec.target]), spec.name))
    return KnowledgeGraph(nodes, edges, schema)


# ---------------------------------------------------------------- oracles


def _is_bidirectional(schema, name, src_type, tgt_type) -> bool:
    for spec in schema.edge_types:
        if (spec.name, spec.source, spec.target) == (name, src_type, tgt_type):
            return spec.bidirectional
    return False


def oracle_neighbors(graph, v, edge_type) -> set:
    out = set()
    types = {n.id: n.node_type for n in graph.nodes.values()}
    for e in graph.edges:
        if e.edge_type != edge_type:
            continue
        if e.source == v:
            out.add(e.target)
        if e.target == v and _is_bidirectional(graph.schema, e.edge_type, types[e.source], types[e.target]):
            out.add(e.source)
    return out


def _steps_from(graph, v):
    types = {n.id: n.node_type for n in graph.nodes.values()}
    for e in graph.edges:
        if e.source == v:
            yield e.target
        if e.target == v and _is_bidirectional(graph.schema, e.edge_type, types[e.source], types[e.target]):
            yield e.source


def oracle_reach_type(graph, v, target_type, max_hops) -> set:
    """Endpoints of every simple path of 1..max_hops hops whose interior avoids target_type."""
    found = set()

    def walk(node, path, depth):
        if depth == max_hops:
            return
        for u in _steps_from(graph, node):
            if u in path:
                continue
            if graph.nodes[u].node_type == target_type:
                found.add(u)
            else:
                walk(u, path | {u}, depth + 1)

    walk(v, {v}, 0)
    return found


def oracle_common(graph, inputs) -> set:
    sets = []
    for members, edge_type in inputs:
        acc = set()
        for v in members:
            acc |= oracle_neighbors(graph, v, edge_type)
        sets.append(acc)
    result = sets[0]
    for other in sets[1:]:
        result = {u for u in result if u in other}
    return result


def oracle_score(hint: str, text: str, dim=DEFAULT_DIM) -> float:
    a = Counter(token_bucket(t, dim) for t in tokenize(hint))
    b = Counter(token_bucket(t, dim) for t in tokenize(text))
    na = math.sqrt(sum(x * x for x in a.values()))
    nb = math.sqrt(sum(x * x for x in b.values()))
    if na == 0 or nb == 0:
        return 0.0
    return sum(a[k] * b[k] for k in a) / (na * nb)


def oracle_find_node(graph, hint, node_type, theta) -> set:
    scores = {
        n.id: oracle_score(hint, node_text(n.attributes))
        for n in graph.nodes.values()
        if n.node_type == node_type
    }
    if not scores:
        return set()
    hits = {v for v, s in scores.items() if s >= theta}
    if hits:
        return hits
    best = max(scores.values())
    return {min(v for v, s in scores.items() if s == best)}


# ---------------------------------------------------------------- plans


def random_plan(rng: random.Random, schema: GraphSchema, n_steps=None, query="q") -> TraversalPlan:
    """A random plan drawing every name from the schema; it may or may not verify."""
    ntypes = sorted(schema.node_types)
    enames = sorted(schema.edge_type_names)
    n_steps = n_steps or rng.randint(1, 5)
    steps = [PlanStep("s1", "find_node", FindNodeParams(rng.choice(WORDS), rng.choice(ntypes)))]
    for i in range(2, n_steps + 1):
        sid = f"s{i}"
        ref = lambda: rng.choice(steps).step_id  # noqa: E731
        kind = rng.random()
        if kind < 0.15:
            steps.append(PlanStep(sid, "find_node", FindNodeParams(rng.choice(WORDS), rng.choice(ntypes))))
        elif kind < 0.5:
            steps.append(PlanStep(sid, "fetch_neighbors", FetchNeighborsParams(ref(), TraversalParam("edge_type", rng.choice(enames)))))
        elif kind < 0.8:
            hops = rng.choice([None, 1, 2, 3])
            steps.append(PlanStep(sid, "fetch_neighbors", FetchNeighborsParams(ref(), TraversalParam("node_type", rng.choice(ntypes)), hops)))
        else:
            k = rng.randint(2, 3)
            inputs = tuple(CommonInput(ref(), rng.choice(enames)) for _ in range(k))
            steps.append(PlanStep(sid, "find_common_nodes", FindCommonNodesParams(inputs)))
    return TraversalPlan(query=query, steps=tuple(steps))
