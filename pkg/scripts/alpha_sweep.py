#!/usr/bin/env python3
"""Sweep the cost-penalty weight and tabulate the accuracy/cost trade-off.

Trains one policy per alpha on the same world and seed, then evaluates each
greedily. Higher alpha should never buy more retrieval or longer rollouts.

Usage:
    python scripts/alpha_sweep.py --alphas 0.0 0.5 1.0 --seed 0
"""

from __future__ import annotations

import argparse

from planrag import (
    OrchestratorConfig,
    TrainConfig,
    evaluate,
    generate_world,
    init_params,
    scripted_pricing_table,
    train,
    training_rollout_fn,
)
from planrag.evaluation import report_markdown
from planrag.executors import ExecutorSuite
from planrag.corpus import build_index
from planrag.synthworld import SCRIPTED_MODEL, ScriptedBackend


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.5, 1.0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--batches", type=int, default=50)
    ap.add_argument("--batch-size", type=int, default=40)
    ap.add_argument("--lr", type=float, default=0.3)
    args = ap.parse_args()

    world = generate_world(seed=args.seed)
    suite = ExecutorSuite(
        backend=ScriptedBackend(world), index=build_index(world.documents), k=5
    )
    orch = OrchestratorConfig()
    records = world.dataset_records()
    pricing = scripted_pricing_table()

    reports = []
    for alpha in args.alphas:
        tc = TrainConfig(
            alpha=alpha,
            seed=args.seed,
            n_batches=args.batches,
            batch_size=args.batch_size,
            learning_rate=args.lr,
        )
        params, _ = train(training_rollout_fn(suite, orch), records, init_params(), tc)
        reports.append(
            evaluate(
                records, params, suite, orch, pricing, SCRIPTED_MODEL, f"alpha={alpha}"
            )
        )

    print(report_markdown(reports))


if __name__ == "__main__":
    main()
