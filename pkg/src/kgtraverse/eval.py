"""Evaluation metrics and the batch harness."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Protocol, Sequence

from .config import RunConfig
from .executor import (
    ERROR_CLASSES,
    ERROR_HALLUCINATION_BLOCKED,
    ERROR_NONE,
    ERROR_PROVIDER,
    RunRecord,
    run_query,
)
from .graph_store import KnowledgeGraph
from .planner import load_few_shot
from .providers import ChatRequest, Provider
from .similarity import Embedder, tokenize

log = logging.getLogger(__name__)

MILLION = Decimal(1_000_000)


@dataclass(frozen=True)
class PricingTable:
    """Dollars per million input and output tokens."""

    input_rate: Decimal = Decimal(30)
    output_rate: Decimal = Decimal(60)

    def __post_init__(self):
        object.__setattr__(self, "input_rate", Decimal(str(self.input_rate)))
        object.__setattr__(self, "output_rate", Decimal(str(self.output_rate)))
        if self.input_rate < 0 or self.output_rate < 0:
            raise ValueError("pricing rates must be non-negative")


def inference_cost(input_tokens: int, output_tokens: int, pricing: PricingTable = PricingTable()) -> Decimal:
    if input_tokens < 0 or output_tokens < 0:
        raise ValueError("token counts must be non-negative")
    return pricing.input_rate * (Decimal(input_tokens) / MILLION) + pricing.output_rate * (
        Decimal(output_tokens) / MILLION
    )


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: str, reference: str) -> tuple[float, float, float]:
    """Word-level ROUGE-L as (precision, recall, f1)."""
    c = tokenize(candidate)
    r = tokenize(reference)
    if not c or not r:
        return 0.0, 0.0, 0.0
    lcs = lcs_length(c, r)
    if lcs == 0:
        return 0.0, 0.0, 0.0
    p = lcs / len(c)
    rec = lcs / len(r)
    return p, rec, 2 * p * rec / (p + rec)


class Judge(Protocol):
    """Grades an answer against a reference; True means correct."""

    def __call__(self, question: str, reference: str, answer: str) -> bool: ...


class LLMJudge:
    """Judge backed by a chat provider and a prompt template with {question}, {reference}, {answer}.

    Nothing ships a default judge; wire one in explicitly.
    """

    def __init__(self, provider: Provider, template: str):
        self.provider = provider
        self.template = template

    @classmethod
    def from_template_file(cls, provider: Provider, path: str | Path) -> LLMJudge:
        return cls(provider, Path(path).read_text(encoding="utf-8"))

    def __call__(self, question: str, reference: str, answer: str) -> bool:
        prompt = self.template.format(question=question, reference=reference, answer=answer)
        reply = self.provider.complete(ChatRequest(prompt, "judge", query=question)).text
        return reply.strip().lower().startswith(("yes", "correct", "true"))


@dataclass(frozen=True)
class Question:
    id: str
    question: str
    answer: str


@dataclass
class QuestionResult:
    id: str
    rouge_l: float
    cost: float
    wall_time_s: float | None
    error_class: str
    judged_correct: bool | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class EvalSummary:
    records: list[QuestionResult] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.records)

    def _mean(self, values) -> float | None:
        values = list(values)
        if not values or any(v is None for v in values):
            return None
        return sum(values) / len(values)

    @property
    def mean_rouge_l(self) -> float | None:
        return self._mean(r.rouge_l for r in self.records)

    @property
    def mean_cost(self) -> float | None:
        return self._mean(r.cost for r in self.records)

    @property
    def mean_time(self) -> float | None:
        return self._mean(r.wall_time_s for r in self.records)

    @property
    def error_probabilities(self) -> dict[str, float] | None:
        if not self.records:
            return None
        return {
            cls: sum(r.error_class == cls for r in self.records) / len(self.records)
            for cls in ERROR_CLASSES
            if cls != ERROR_NONE
        }

    def reasoning_error_estimate(self, floor: float) -> float | None:
        """Share of completed runs scoring below ``floor``; a mechanical stand-in for manual review."""
        if not self.records:
            return None
        done = (ERROR_NONE, ERROR_HALLUCINATION_BLOCKED)
        return sum(r.error_class in done and r.rouge_l < floor for r in self.records) / len(self.records)

    @property
    def judge_score(self) -> float | None:
        judged = [r.judged_correct for r in self.records if r.judged_correct is not None]
        if not judged:
            return None
        return 100.0 * sum(judged) / len(judged)

    def to_dict(self, rouge_floor: float = 0.2) -> dict:
        return {
            "questions": self.count,
            "mean_rouge_l": self.mean_rouge_l,
            "mean_cost_usd": self.mean_cost,
            "mean_wall_time_s": self.mean_time,
            "error_probabilities": self.error_probabilities,
            "reasoning_error_approx": {
                "value": self.reasoning_error_estimate(rouge_floor),
                "rouge_floor": rouge_floor,
                "note": "approximate: completed runs whose ROUGE-L F1 falls below the floor",
            },
            "judge_score": self.judge_score,
        }


def ratio_metrics(baseline: EvalSummary, ours: EvalSummary) -> tuple[float, float]:
    """(cost reduction factor, speedup) of ``ours`` relative to ``baseline``."""
    if sorted(r.id for r in baseline.records) != sorted(r.id for r in ours.records):
        raise ValueError("summaries cover different question sets")
    if not ours.mean_cost or not ours.mean_time:
        raise ZeroDivisionError("our mean cost and mean time must be non-zero")
    return baseline.mean_cost / ours.mean_cost, baseline.mean_time / ours.mean_time


def read_questions(path: str | Path) -> list[Question]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
                out.append(Question(str(doc["id"]), doc["question"], doc["answer"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad question record ({exc})") from None
    return out


def score_record(rec: RunRecord, q: Question, pricing: PricingTable, judge: Judge | None = None) -> QuestionResult:
    _, _, f1 = rouge_l(rec.answer or "", q.answer)
    judged = None
    if judge is not None and rec.answer is not None:
        judged = bool(judge(q.question, q.answer, rec.answer))
    return QuestionResult(
        q.id, f1, float(inference_cost(rec.input_tokens, rec.output_tokens, pricing)),
        rec.wall_time_s, rec.error_class, judged,
    )


def run_batch(
    graph: KnowledgeGraph,
    provider: Provider,
    questions: Iterable[Question],
    config: RunConfig,
    judge: Judge | None = None,
    embedder: Embedder | None = None,
    results_path: str | Path | None = None,
    summary_path: str | Path | None = None,
) -> tuple[EvalSummary, list[RunRecord]]:
    """Run every question, score it, and write JSONL records plus a summary document."""
    questions = list(questions)
    pricing = PricingTable(config.input_rate, config.output_rate)
    few_shot = load_few_shot(config.few_shot, config.domain)

    def one(q: Question) -> RunRecord:
        try:
            return run_query(graph, provider, q.question, config, question_id=q.id, embedder=embedder, few_shot=few_shot)
        except Exception as exc:  # noqa: BLE001 - one bad question must not sink the batch
            log.exception("question %s crashed", q.id)
            return RunRecord(query=q.question, error_class=ERROR_PROVIDER, question_id=q.id, error_detail=repr(exc))

    if config.parallelism > 1 and len(questions) > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            records = list(pool.map(one, questions))
    else:
        records = [one(q) for q in questions]

    summary = EvalSummary([score_record(r, q, pricing, judge) for r, q in zip(records, questions)])
    results_path = results_path or config.results_path
    summary_path = summary_path or config.summary_path
    if results_path:
        write_results(results_path, records, summary)
    if summary_path:
        Path(summary_path).parent.mkdir(parents=True, exist_ok=True)
        Path(summary_path).write_text(
            json.dumps(summary.to_dict(config.rouge_floor), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    return summary, records


def write_results(path: str | Path, records: Sequence[RunRecord], summary: EvalSummary) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec, res in zip(records, summary.records):
            doc = rec.to_dict()
            doc["score"] = {"rouge_l": res.rouge_l, "cost_usd": res.cost, "judged_correct": res.judged_correct}
            fh.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")
