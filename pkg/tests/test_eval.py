import json
import random
from decimal import Decimal

import pytest
from hypothesis import given, strategies as st

from kgtraverse.config import RunConfig
from kgtraverse.eval import (
    EvalSummary,
    LLMJudge,
    PricingTable,
    Question,
    QuestionResult,
    inference_cost,
    ratio_metrics,
    read_questions,
    rouge_l,
    run_batch,
)
from kgtraverse.providers import EchoAnswerer, RoutingProvider, ScriptedProvider, TemplatePlanner


def dp_lcs(a, b):
    table = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            table[i + 1][j + 1] = table[i][j] + 1 if a[i] == b[j] else max(table[i][j + 1], table[i + 1][j])
    return table[-1][-1]


def test_rouge_examples():
    p, r, f = rouge_l("the cat sat", "the cat ran")
    assert (p, r, f) == pytest.approx((2 / 3, 2 / 3, 2 / 3))
    assert rouge_l("Alice Chen", "alice chen")[2] == 1.0
    assert rouge_l("", "anything") == (0.0, 0.0, 0.0)
    assert rouge_l("x y", "z") == (0.0, 0.0, 0.0)
    # order matters: LCS of "a b c" vs "c b a" is 1
    assert rouge_l("a b c", "c b a")[2] == pytest.approx(1 / 3)


@pytest.mark.parametrize("inp, out, expected", [
    (1_000_000, 0, Decimal("30")),
    (0, 0, Decimal("0")),
    (100_000, 10_000, Decimal("3.60")),
])
def test_cost_examples(inp, out, expected):
    assert inference_cost(inp, out) == expected


def test_cost_rejects_negative():
    with pytest.raises(ValueError):
        inference_cost(-1, 0)
    with pytest.raises(ValueError):
        PricingTable(-1, 0)


@given(st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9), st.integers(0, 10**9))
def test_cost_is_linear(a, b, c, d):
    assert inference_cost(a + c, b + d) == inference_cost(a, b) + inference_cost(c, d)


words = st.lists(st.sampled_from(["a", "b", "c", "d", "e"]), max_size=12).map(" ".join)


@given(words, words)
def test_rouge_matches_dp_and_is_symmetric_in_f1(x, y):
    p, r, f = rouge_l(x, y)
    xs, ys = x.split(), y.split()
    if xs and ys:
        lcs = dp_lcs(xs, ys)
        assert p == pytest.approx(lcs / len(xs), abs=1e-9)
        assert r == pytest.approx(lcs / len(ys), abs=1e-9)
    assert f == pytest.approx(rouge_l(y, x)[2], abs=1e-12)
    assert 0.0 <= f <= 1.0


def summary(costs, times, ids=None):
    ids = ids or [f"q{i}" for i in range(len(costs))]
    return EvalSummary([QuestionResult(i, 1.0, c, t, "none") for i, c, t in zip(ids, costs, times)])


def test_ratio_metrics():
    assert ratio_metrics(summary([10, 10], [4, 4]), summary([2, 2], [1, 1])) == (5.0, 4.0)
    with pytest.raises(ValueError):
        ratio_metrics(summary([1], [1], ["a"]), summary([1], [1], ["b"]))
    with pytest.raises(ZeroDivisionError):
        ratio_metrics(summary([1], [1]), summary([0], [1]))


def test_empty_summary_is_undefined():
    s = EvalSummary()
    assert s.mean_rouge_l is None and s.error_probabilities is None
    assert s.to_dict()["questions"] == 0


def template_provider():
    return RoutingProvider(TemplatePlanner.from_file(), EchoAnswerer(["name", "title"]))


def test_run_batch_on_toy(toy_graph, toy_questions_path, tmp_path):
    questions = read_questions(toy_questions_path)[:3]
    res, summ = tmp_path / "r.jsonl", tmp_path / "s.json"
    s, records = run_batch(toy_graph, template_provider(), questions, RunConfig(), results_path=res, summary_path=summ)
    assert s.mean_rouge_l == 1.0
    assert all(r.error_class == "none" for r in records)
    lines = [json.loads(ln) for ln in res.read_text().splitlines()]
    assert [ln["question_id"] for ln in lines] == ["q1", "q2", "q3"]
    # aggregates can be recomputed from the JSONL alone
    doc = json.loads(summ.read_text())
    assert doc["mean_rouge_l"] == pytest.approx(sum(ln["score"]["rouge_l"] for ln in lines) / 3)
    assert doc["mean_cost_usd"] == pytest.approx(sum(ln["score"]["cost_usd"] for ln in lines) / 3)
    assert doc["mean_wall_time_s"] == pytest.approx(sum(ln["timing"]["wall_s"] for ln in lines) / 3)


def test_run_batch_error_probability(toy_graph, toy_questions_path):
    questions = read_questions(toy_questions_path)[:3] + [Question("x", "What is the meaning of life?", "42")]
    s, records = run_batch(toy_graph, template_provider(), questions, RunConfig(max_retries=1))
    assert s.error_probabilities["planning-exhausted"] == 0.25
    assert sum(s.error_probabilities.values()) == 0.25
    assert records[-1].answer is None


def test_run_batch_empty(toy_graph):
    s, records = run_batch(toy_graph, template_provider(), [], RunConfig())
    assert records == [] and s.count == 0


def test_run_batch_parallel_matches_serial(toy_graph, toy_questions_path):
    qs = read_questions(toy_questions_path)
    cfg = RunConfig(record_timing=False)
    _, serial = run_batch(toy_graph, template_provider(), qs, cfg)
    _, parallel = run_batch(toy_graph, template_provider(), qs, cfg.replace(parallelism=4))
    assert [r.to_json() for r in serial] == [r.to_json() for r in parallel]


def test_judge_hook(toy_graph, toy_questions_path):
    qs = read_questions(toy_questions_path)[:2]
    judge = LLMJudge(ScriptedProvider(["Yes, correct.", "No."]), "Q: {question}\nRef: {reference}\nA: {answer}")
    s, _ = run_batch(toy_graph, template_provider(), qs, RunConfig(), judge=judge)
    assert s.judge_score == 50.0


def test_reasoning_error_estimate():
    s = EvalSummary([QuestionResult("a", 0.1, 0, 0, "none"), QuestionResult("b", 0.9, 0, 0, "none"),
                     QuestionResult("c", 0.0, 0, 0, "planning-exhausted"), QuestionResult("d", 0.5, 0, 0, "none")])
    assert s.reasoning_error_estimate(0.2) == 0.25


def test_read_questions_reports_line(tmp_path):
    p = tmp_path / "q.jsonl"
    p.write_text('{"id": 1, "question": "a", "answer": "b"}\n{"id": 2}\n')
    with pytest.raises(ValueError, match=":2:"):
        read_questions(p)


def test_random_question_ids_roundtrip(tmp_path):
    rng = random.Random(3)
    rows = [{"id": rng.randint(0, 99), "question": "q", "answer": "a"} for _ in range(5)]
    p = tmp_path / "q.jsonl"
    p.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
    assert [q.id for q in read_questions(p)] == [str(r["id"]) for r in rows]
