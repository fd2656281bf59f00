"""Command line entry point: ``ffhr <train|eval|gradcheck|synth>``."""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from . import checkpoint, data, evaluate, train
from .config import ConfigError, load_run_config, write_config
from .diff import check
from .model import graph_for, init_model

log = logging.getLogger("ffhr")


def _threads(cfg):
    n = 1 if cfg.deterministic else cfg.resolved_threads()
    if not n:
        return contextlib.nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=n)


def cmd_train(args) -> int:
    cfg = load_run_config(args.config, args.set)
    if not cfg.data:
        raise ConfigError("no dataset: set 'data' in the config or pass --set data=DIR")
    store = data.augment_reciprocal(data.load_dataset(cfg.data))
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_config(cfg, out / "config.cfg")
    tcfg = cfg.train_config()
    for key in tcfg.off_grid():
        log.warning("%s = %s is outside the usual search grid", key, getattr(tcfg, key))
    with _threads(cfg):
        result = train.fit(store, tcfg, metrics_path=out / "metrics.jsonl")
    checkpoint.save_checkpoint(result.model, out / "model.ffhr")
    print(f"trained {len(result.history)} epochs; best epoch {result.best_epoch}, valid MRR {result.best_valid_mrr:.4f}")
    print(f"checkpoint written to {out / 'model.ffhr'}")
    return 0


def cmd_eval(args) -> int:
    store = data.augment_reciprocal(data.load_dataset(args.data))
    model = checkpoint.load_checkpoint(args.checkpoint, expect_vocab_hash=store.vocab_hash())
    if model.num_entities != store.num_entities or model.num_relations != store.num_relations:
        raise checkpoint.CheckpointError("checkpoint shape does not match the dataset")
    report, queries, ranks = evaluate.evaluate_split(model, store, args.split, return_ranks=True)
    doc = {"split": args.split, "metrics": report.to_dict()}
    relations = categories = None
    if args.per_relation:
        relations = doc["per_relation"] = evaluate.per_relation(store, queries, ranks)
    if args.categories:
        categories = doc["per_category"] = evaluate.per_category(store, queries, ranks, args.threshold)
    print(evaluate.format_report(args.split, report, relations, categories))
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name(f"report_{args.split}.json")
    out.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    print(f"report written to {out}")
    return 0


GRADCHECK_DEFAULTS = ["dim=8", "layers=2", "heads=2", "reg_coeff=0.05", "model=rescal"]


def cmd_gradcheck(args) -> int:
    cfg = load_run_config(args.config, GRADCHECK_DEFAULTS + list(args.set))
    if cfg.data:
        store = data.load_dataset(cfg.data)
    else:
        store = data.random_kg(16, 3, 40, seed=cfg.seed)
    store = data.augment_reciprocal(store)
    if cfg.dim > 16 or store.num_entities > 32:
        raise ConfigError("gradcheck is meant for toy models (dim <= 16, entities <= 32)")
    tcfg = cfg.train_config()
    model = init_model(tcfg, store.num_entities, store.num_relations, store.vocab_hash())
    graph = graph_for(model, data.build_adjacency(store))
    batch = store.split("train")[: args.batch]
    corrupt = None
    if args.corrupt_gradient:

        def corrupt(grads):
            name = next(iter(grads))
            grads[name] = grads[name] * 1.01 + 1e-3
            return grads

    report = check.gradcheck(model, batch, graph, corrupt=corrupt)
    print(report.format())
    return 0 if report.passed else 1


def cmd_synth(args) -> int:
    store = data.generate_synthetic_tree(args.depth, args.branching, args.seed)
    paths = data.write_dataset(store, args.out)
    for p, name in zip(paths, data.SPLITS):
        print(f"{name}: {len(store.split(name))} triples -> {p}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffhr", description="Hyperbolic knowledge graph completion.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered ranking metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory with train/valid/test files")
    p.add_argument("--split", default="test", choices=data.SPLITS)
    p.add_argument("--per-relation", action="store_true", help="per-relation Hits@10 and Khs")
    p.add_argument("--categories", action="store_true", help="1-1/1-N/N-1/N-N breakdown")
    p.add_argument("--threshold", type=float, default=1.5, help="category threshold")
    p.add_argument("--out", help="JSON report path (default: next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="compare tape gradients with finite differences")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--batch", type=int, default=10, help="number of train triples in the checked batch")
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("synth", help="write a synthetic tree dataset")
    p.add_argument("--depth", type=int, default=7)
    p.add_argument("--branching", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, data.DataError, checkpoint.CheckpointError, OSError) as exc:
        print(f"ffhr {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
