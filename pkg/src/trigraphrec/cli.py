"""Command-line surface: preprocess, build-graphs, train, evaluate, sweep, ablate."""

import argparse
import json
import os
import sys

from . import experiment
from .config import TrainConfig, load_config, parse_config_text
from .data import (dataset_from_bundle, load_bundle, preprocess_corpus,
                   read_session_file, read_triple_file, save_bundle,
                   triples_from_bundle)
from .graphs import build_hypergraph, build_line_graph, export_edge_list, export_triples
from .trainer import build_trainer, evaluate_ranking, restore


def _add_common(parser):
    parser.add_argument("--seed", type=int, default=None, help="run seed override")
    parser.add_argument("--out-dir", default=".", help="directory for outputs")


def _config_from_args(args) -> TrainConfig:
    overrides = {
        "seed": args.seed,
        "embedding_dim": getattr(args, "embedding_dim", None),
        "layers": getattr(args, "layers", None),
        "batch_size": getattr(args, "batch_size", None),
        "learning_rate": getattr(args, "learning_rate", None),
        "epochs": getattr(args, "epochs", None),
        "ablation": getattr(args, "ablation", None),
    }
    if getattr(args, "config", None):
        return load_config(args.config, **overrides)
    return TrainConfig(**{k: v for k, v in overrides.items() if v is not None})


def _add_train_flags(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--embedding-dim", type=int, dest="embedding_dim")
    parser.add_argument("--layers", type=int)
    parser.add_argument("--batch-size", type=int, dest="batch_size")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--epochs", type=int)
    parser.add_argument("--ablation", help="comma separated flags: NP,NKG,NDKG,NIEM")


def cmd_preprocess(args):
    sessions = read_session_file(args.sessions)
    triples = read_triple_file(args.triples) if args.triples else None
    bundle = preprocess_corpus(
        sessions, triples, min_item_freq=args.min_item_freq,
        min_session_len=args.min_session_len, test_boundary=args.test_boundary,
        recipe=args.recipe)
    os.makedirs(args.out_dir, exist_ok=True)
    path = os.path.join(args.out_dir, "bundle.json")
    save_bundle(bundle, path)
    print(f"wrote {path}")
    for key, value in bundle["stats"].items():
        print(f"  {key}: {value}")
    print(f"  items: {bundle['item_count']}")


def cmd_build_graphs(args):
    bundle = load_bundle(args.bundle)
    dataset = dataset_from_bundle(bundle, split="train")
    item_sets = dataset.prefix_item_sets()
    hypergraph = build_hypergraph(item_sets, dataset.item_count)
    line_graph = build_line_graph(item_sets)
    os.makedirs(args.out_dir, exist_ok=True)
    export_edge_list(hypergraph.incidence, os.path.join(args.out_dir, "hypergraph.tsv"))
    export_edge_list(line_graph.adjacency, os.path.join(args.out_dir, "line_graph.tsv"))
    print(f"hypergraph: {hypergraph.incidence.shape[0] - 1} item rows, "
          f"{hypergraph.incidence.shape[1]} hyperedges, {hypergraph.incidence.nnz} entries")
    print(f"line graph: {line_graph.session_count} nodes, "
          f"{line_graph.adjacency.nnz} directed edges")
    triples = triples_from_bundle(bundle)
    if triples is not None:
        export_triples(triples, os.path.join(args.out_dir, "kg_triples.tsv"))
        print(f"knowledge graph: {len(triples.triples)} triples "
              f"({triples.forward_relation_count} forward relations)")


def cmd_train(args):
    bundle = load_bundle(args.bundle)
    config = _config_from_args(args)
    report = experiment.run_experiment(bundle, config, out_dir=args.out_dir)
    print(experiment.format_report(report))
    print(f"artifacts in {args.out_dir}")


def cmd_evaluate(args):
    bundle = load_bundle(args.bundle)
    config = _config_from_args(args)
    dataset = dataset_from_bundle(bundle, split="train")
    triples = triples_from_bundle(bundle)
    trainer = build_trainer(dataset, config, triples)
    restore(trainer, args.checkpoint, force=args.force)
    pairs = experiment.test_pairs_from_bundle(bundle)
    if not pairs:
        sys.exit("bundle has no test sessions to evaluate")
    report = evaluate_ranking(trainer.model, pairs)
    for key, value in report.items():
        print(f"{key}: {value:.4f}" if isinstance(value, float) else f"{key}: {value}")
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "eval_report.json"), "w") as fh:
        json.dump(report, fh, indent=2)


def cmd_sweep(args):
    bundle = load_bundle(args.bundle)
    config = _config_from_args(args)
    result = experiment.run_sweep(bundle, config, args.grid, out_dir=args.out_dir)
    print(experiment.format_sweep(result))


def cmd_ablate(args):
    bundle = load_bundle(args.bundle)
    config = _config_from_args(args)
    result = experiment.run_ablations(bundle, config, out_dir=args.out_dir)
    print(experiment.format_ablations(result))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trigraphrec",
        description="Session recommender over hypergraph, line-graph, and "
                    "knowledge-graph channels")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter, split, and encode a session corpus")
    p.add_argument("--sessions", required=True, help="TSV: session_id, item, timestamp")
    p.add_argument("--triples", help="TSV: head_item, relation, tail_value")
    p.add_argument("--recipe", choices=("tmall", "retailrocket", "kkbox"))
    p.add_argument("--min-item-freq", type=int, default=5)
    p.add_argument("--min-session-len", type=int, default=2)
    p.add_argument("--test-boundary", type=int,
                   help="sessions ending after this timestamp go to the test split")
    _add_common(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("build-graphs", help="export the three graphs for a bundle")
    p.add_argument("--bundle", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_build_graphs)

    p = sub.add_parser("train", help="train on a bundle and report test metrics")
    p.add_argument("--bundle", required=True)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a bundle's test split")
    p.add_argument("--bundle", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--force", action="store_true",
                   help="load even if the config hash differs")
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="grid sweep over one hyperparameter")
    p.add_argument("--bundle", required=True)
    p.add_argument("--grid", required=True, choices=sorted(experiment.SWEEP_GRIDS))
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("ablate", help="run the full model and each ablation variant")
    p.add_argument("--bundle", required=True)
    _add_train_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except experiment.StageError as exc:
        sys.exit(str(exc))
    return 0
