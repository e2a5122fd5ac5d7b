"""Run the bundled toy question set offline and print the summary.

    python3 scripts/run_toy_eval.py --out runs/toy
"""

import argparse
import json
from importlib import resources
from pathlib import Path

from kgtraverse.config import RunConfig
from kgtraverse.eval import read_questions, run_batch
from kgtraverse.graph_store import load_graph_file
from kgtraverse.providers import CountingProvider, EchoAnswerer, RoutingProvider, TemplatePlanner


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/toy")
    ap.add_argument("--parallelism", type=int, default=1)
    ap.add_argument("--max-retries", type=int, default=3)
    ap.add_argument("--timing", action="store_true", help="record wall-clock timings (results stop being byte-stable)")
    args = ap.parse_args()

    data = resources.files("kgtraverse.data")
    graph = load_graph_file(data / "toy_academic.json")
    questions = read_questions(data / "toy_academic_questions.jsonl")
    config = RunConfig(
        answer_keys=["name", "title"], parallelism=args.parallelism,
        max_retries=args.max_retries, record_timing=args.timing,
    )
    provider = CountingProvider(RoutingProvider(TemplatePlanner.from_file(), EchoAnswerer(config.answer_keys)))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary, records = run_batch(
        graph, provider, questions, config,
        results_path=out / "results.jsonl", summary_path=out / "summary.json",
    )
    for q, rec in zip(questions, records):
        print(f"{q.id}  [{rec.error_class}]  calls={rec.provider_calls}  {rec.answer}")
    print(json.dumps(summary.to_dict(config.rouge_floor), indent=2))
    print(f"provider calls by purpose: {provider.counts}")


if __name__ == "__main__":
    main()
