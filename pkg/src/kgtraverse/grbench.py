"""Convert GRBENCH / Graph-CoT style files to the native graph and question formats.

The graph layout is one JSON object keyed ``<node_type>_nodes``; each entry maps a node
id to ``{"features": {...}, "neighbors": {<relation>: [ids]}}``. QA files are JSON lines
(or a JSON list) of ``{"qid", "question", "answer", ...}``.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Mapping

from .graph_store import GraphFormatError, as_text

NODE_SUFFIX = "_nodes"


def convert_graph(doc: Mapping) -> dict:
    """Native graph document with a declared schema.

    The relation key becomes the edge type; the target's node type is looked up from the
    id. GRBENCH lists relations from both ends, so every edge type is one-directional.
    """
    if not isinstance(doc, Mapping):
        raise GraphFormatError("GRBENCH graph must be a JSON object")
    type_of: dict[str, str] = {}
    nodes = []
    for key in sorted(doc):
        if not key.endswith(NODE_SUFFIX):
            raise GraphFormatError(f"unexpected top-level key {key!r}; expected '<type>{NODE_SUFFIX}'")
        ntype = key[: -len(NODE_SUFFIX)]
        for nid, rec in doc[key].items():
            gid = str(nid)
            if gid in type_of:
                raise GraphFormatError(f"node id {gid!r} appears under both {type_of[gid]!r} and {ntype!r}")
            type_of[gid] = ntype
            feats = (rec or {}).get("features", {}) or {}
            nodes.append({"id": gid, "type": ntype, "attributes": {str(k): as_text(v) for k, v in sorted(feats.items())}})
    edges = []
    seen = set()
    triples = set()
    for key in sorted(doc):
        ntype = key[: -len(NODE_SUFFIX)]
        for nid, rec in doc[key].items():
            for rel, targets in sorted(((rec or {}).get("neighbors", {}) or {}).items()):
                for t in targets or ():
                    t = str(t)
                    if t not in type_of:
                        continue  # GRBENCH neighbour lists occasionally point outside the dump
                    edge = (str(nid), t, rel)
                    if edge in seen:
                        continue
                    seen.add(edge)
                    triples.add((rel, ntype, type_of[t]))
                    edges.append({"source": edge[0], "target": t, "type": rel})
    node_types: dict[str, set] = {}
    for n in nodes:
        node_types.setdefault(n["type"], set()).update(n["attributes"])
    schema = {
        "node_types": {t: sorted(k) for t, k in sorted(node_types.items())},
        "edge_types": [
            {"name": r, "source": s, "target": t, "bidirectional": False} for r, s, t in sorted(triples)
        ],
    }
    return {"schema": schema, "nodes": nodes, "edges": edges}


def convert_questions(records: Iterable[Mapping]) -> list[dict]:
    out = []
    for i, rec in enumerate(records):
        qid = rec.get("qid", rec.get("id", i))
        answer = rec.get("answer", "")
        if not isinstance(answer, str):
            answer = ", ".join(map(str, answer)) if isinstance(answer, list) else str(answer)
        out.append({"id": str(qid), "question": rec["question"], "answer": answer})
    return out


def read_qa_file(path: str | Path) -> list[Mapping]:
    text = Path(path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        return json.loads(text)
    return [json.loads(line) for line in text.splitlines() if line.strip()]
