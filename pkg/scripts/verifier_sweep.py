"""Random-plan sweep: how often plans pass, whether passing plans ever break at
execution time, and how many invented names the verifier catches.

    python3 scripts/verifier_sweep.py --plans 2000 --seed 0
"""

import argparse
import random
import sys
from collections import Counter
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "tests"))

from helpers import random_graph, random_plan, random_schema  # noqa: E402

from kgtraverse.actions import TraversalParam  # noqa: E402
from kgtraverse.config import RunConfig  # noqa: E402
from kgtraverse.executor import COMPLETE, execute_plan  # noqa: E402
from kgtraverse.plan import FetchNeighborsParams, FindNodeParams, PlanStep, TraversalPlan  # noqa: E402
from kgtraverse.verifier import verify_plan  # noqa: E402


def invent(plan, rng):
    """Swap one name in a random step for one the schema does not declare."""
    i = rng.randrange(len(plan.steps))
    s = plan.steps[i]
    p = s.params
    if isinstance(p, FindNodeParams):
        new = PlanStep(s.step_id, s.action, FindNodeParams(p.hint, "made_up_type"))
    elif isinstance(p, FetchNeighborsParams) and p.param.kind == "edge_type":
        new = PlanStep(s.step_id, s.action, FetchNeighborsParams(p.source, TraversalParam("edge_type", "made_up_edge")))
    else:
        new = PlanStep(s.step_id, "made_up_action", p)
    steps = list(plan.steps)
    steps[i] = new
    return TraversalPlan(plan.query, tuple(steps))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--plans", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    config = RunConfig(theta=0.0, top_k=None, step_cap=None)

    stats = Counter()
    rules = Counter()
    for _ in range(args.plans):
        schema = random_schema(rng)
        plan = random_plan(rng, schema)
        report = verify_plan(plan, schema)
        for f in report.fatal:
            rules[f.rule] += 1
        if not report.passed:
            stats["rejected"] += 1
            continue
        stats["passed"] += 1
        graph = random_graph(rng, schema, max_nodes=40)
        if execute_plan(graph, plan, config).status != COMPLETE:
            stats["execution_breaks"] += 1
        mutated = verify_plan(invent(plan, rng), schema)
        stats["mutations"] += 1
        stats["mutations_caught"] += not mutated.passed

    print(f"plans: {args.plans}  passed: {stats['passed']}  rejected: {stats['rejected']}")
    print(f"execution breaks among passing plans: {stats['execution_breaks']}")
    print(f"invented names caught: {stats['mutations_caught']}/{stats['mutations']}")
    print("fatal findings by rule:")
    for rule, n in rules.most_common():
        print(f"  {rule:40s} {n}")


if __name__ == "__main__":
    main()
