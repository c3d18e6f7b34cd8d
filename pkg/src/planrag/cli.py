"""Command-line entry points.

    planrag synth  --seed 0 --out-dir data/world0
    planrag index  --corpus corpus.jsonl --out index.pkl
    planrag train  --world data/world0/world.json --out-dir runs/a0
    planrag eval   --world data/world0/world.json --params runs/a0/params.json --out report
    planrag run    --world data/world0/world.json --question "..." [--params ...]
    planrag report --inputs runs/a0/report.json runs/a5/report.json --out combined

The scripted synthetic backend needs no network or API key; `--backend llm`
commands read gateway settings from --config and the API key from the
environment variable named there.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .config import AppConfig, load_config
from .corpus import build_index, load_corpus_jsonl, Index
from .evaluation import (
    MetricsReport,
    evaluate,
    load_dataset,
    report_csv,
    report_markdown,
)
from .executors import ExecutorSuite, GatewayBackend
from .gateway import ChatClient
from .orchestrator import (
    CompactPlanner,
    LLMPlanner,
    OrchestratorConfig,
    rollout,
    training_rollout_fn,
)
from .policy import PolicyParams, init_params
from .ppo import TrainConfig, train
from .synthworld import ScriptedBackend, SynthWorld, generate_world, scripted_pricing_table, SCRIPTED_MODEL


def _scripted_suite(world: SynthWorld, k: int) -> ExecutorSuite:
    return ExecutorSuite(
        backend=ScriptedBackend(world), index=build_index(world.documents), k=k
    )


def _llm_suite(cfg: AppConfig, index: Index) -> ExecutorSuite:
    client = ChatClient(cfg.gateway)
    return ExecutorSuite(
        backend=GatewayBackend(client), index=index, k=cfg.orchestrator.k
    )


def _load_params(path: str | None) -> PolicyParams:
    if path:
        return PolicyParams.load(path)
    return init_params()


def cmd_synth(args: argparse.Namespace) -> int:
    world = generate_world(
        seed=args.seed,
        n_entities=args.entities,
        n_filler_docs=args.filler_docs,
        n_questions_per_kind=args.questions_per_kind,
    )
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    world.save(out / "world.json")
    with open(out / "corpus.jsonl", "w", encoding="utf-8") as fh:
        for doc in world.documents:
            fh.write(
                json.dumps({"id": doc.doc_id, "title": doc.title, "text": doc.text})
                + "\n"
            )
    with open(out / "dataset.jsonl", "w", encoding="utf-8") as fh:
        for record in world.dataset_records():
            fh.write(json.dumps(record) + "\n")
    print(
        f"world seed={args.seed}: {len(world.documents)} docs, "
        f"{len(world.questions)} questions -> {out}"
    )
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    docs = load_corpus_jsonl(args.corpus)
    index = build_index(docs, k1=args.k1, b=args.b)
    index.save(args.out)
    print(f"indexed {len(docs)} docs -> {args.out}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else AppConfig()
    tc: TrainConfig = cfg.training
    if args.alpha is not None:
        tc.alpha = args.alpha
    if args.seed is not None:
        tc.seed = args.seed
    if args.batches is not None:
        tc.n_batches = args.batches
    if args.batch_size is not None:
        tc.batch_size = args.batch_size
    if args.lr is not None:
        tc.learning_rate = args.lr

    world = SynthWorld.load(args.world)
    suite = _scripted_suite(world, cfg.orchestrator.k)
    orch = OrchestratorConfig(
        max_turn=tc.max_turn,
        k=cfg.orchestrator.k,
        turn_cost_mode=tc.turn_cost_mode,
    )
    records = world.dataset_records()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params, history = train(
        training_rollout_fn(suite, orch),
        records,
        init_params(),
        tc,
        log_path=out / "history.jsonl",
    )
    params.save(out / "params.json")
    last = history[-1] if history else {}
    print(
        f"trained alpha={tc.alpha} seed={tc.seed}: "
        f"{tc.n_batches} batches of {tc.batch_size} -> {out / 'params.json'}"
    )
    if last:
        print(
            f"final batch: mean_f1={last['mean_f1']:.4f} "
            f"mean_total_reward={last['mean_total_reward']:.4f}"
        )
    return 0


def _report_json(report: MetricsReport) -> str:
    payload = dataclasses.asdict(report)
    return json.dumps(payload, indent=2)


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else AppConfig()
    world = SynthWorld.load(args.world)
    suite = _scripted_suite(world, cfg.orchestrator.k)
    params = _load_params(args.params)
    records = world.dataset_records()
    name = args.name or Path(args.world).stem
    report = evaluate(
        records,
        params,
        suite,
        cfg.orchestrator,
        pricing=scripted_pricing_table(),
        model=SCRIPTED_MODEL,
        dataset_name=name,
    )
    base = Path(args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".csv").write_text(report_csv([report]), encoding="utf-8")
    base.with_suffix(".md").write_text(report_markdown([report]), encoding="utf-8")
    base.with_suffix(".json").write_text(_report_json(report), encoding="utf-8")
    print(
        f"{name}: f1={report.mean_f1:.4f} cost=${report.mean_token_cost_usd:.8f} "
        f"retrievals={report.mean_retrieval_calls:.2f} turns={report.mean_turns:.2f} "
        f"failures={report.n_failures}"
    )
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config) if args.config else AppConfig()
    if args.backend == "scripted":
        if not args.world:
            print("--world is required with --backend scripted", file=sys.stderr)
            return 2
        world = SynthWorld.load(args.world)
        suite = _scripted_suite(world, cfg.orchestrator.k)
    else:
        if not args.index:
            print("--index is required with --backend llm", file=sys.stderr)
            return 2
        suite = _llm_suite(cfg, Index.load(args.index))

    if args.planner == "llm":
        planner = LLMPlanner(ChatClient(cfg.gateway))
    else:
        planner = CompactPlanner(
            _load_params(args.params),
            mode="greedy" if args.greedy else "sample",
            rng=np.random.default_rng(args.seed),
        )
    result = rollout(args.question, None, planner, suite, cfg.orchestrator)
    print(result.context.trace_json())
    print(f"answer: {result.predicted_answer}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    reports = []
    for path in args.inputs:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        payload.pop("items", None)
        payload.pop("failures", None)
        reports.append(MetricsReport(items=[], failures=[], **payload))
    base = Path(args.out)
    base.parent.mkdir(parents=True, exist_ok=True)
    base.with_suffix(".csv").write_text(report_csv(reports), encoding="utf-8")
    base.with_suffix(".md").write_text(report_markdown(reports), encoding="utf-8")
    print(f"combined {len(reports)} reports -> {base.with_suffix('.csv')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="planrag")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic world")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--entities", type=int, default=10)
    p.add_argument("--filler-docs", type=int, default=10)
    p.add_argument("--questions-per-kind", type=int, default=10)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("index", help="build a BM25 index from a JSONL corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--k1", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.75)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("train", help="train the compact planner on a world")
    p.add_argument("--world", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--config")
    p.add_argument("--alpha", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--batches", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of saved params")
    p.add_argument("--world", required=True)
    p.add_argument("--params")
    p.add_argument("--out", required=True, help="output basename (.csv/.md/.json)")
    p.add_argument("--name")
    p.add_argument("--config")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("run", help="run one question end to end")
    p.add_argument("--question", required=True)
    p.add_argument("--backend", choices=("scripted", "llm"), default="scripted")
    p.add_argument("--world", help="world.json (scripted backend)")
    p.add_argument("--index", help="saved index (llm backend)")
    p.add_argument("--planner", choices=("compact", "llm"), default="compact")
    p.add_argument("--params")
    p.add_argument("--greedy", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="combine saved eval reports")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
