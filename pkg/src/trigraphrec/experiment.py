"""Experiment orchestration: single runs, hyperparameter sweeps, ablations.

A run is preprocess -> build graphs -> train -> evaluate; any failure is
re-raised as a StageError naming the stage so batch drivers can report
where a config died. Sweeps walk the standard grids (propagation depth,
contrastive weight, contrastive sample count) and summarize each metric
as its observed [min, max] bracket across the grid.
"""

import json
import os

import numpy as np

from .config import TrainConfig, config_to_text
from .data import dataset_from_bundle, triples_from_bundle
from .trainer import build_trainer, checkpoint, evaluate_ranking

SWEEP_GRIDS = {
    "layers": ("layers", (1, 2, 3, 4, 5)),
    "contrastive": ("contrastive_weight",
                    (0.001, 0.005, 0.01, 0.05, 0.1, 0.2, 0.5, 1.0)),
    "samples": ("sample_count", (5, 10, 15, 20)),
}

ABLATION_VARIANTS = ("full", "NP", "NKG", "NDKG", "NIEM")


class StageError(RuntimeError):
    """A pipeline stage failed; .stage names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _run_stage(stage: str, fn):
    try:
        return fn()
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc


def test_pairs_from_bundle(bundle: dict):
    test = dataset_from_bundle(bundle, split="test")
    return list(test.sequences)


def run_experiment(bundle: dict, config: TrainConfig, out_dir=None) -> dict:
    """Train on the bundle's train split, evaluate on its test split.

    The test split doubles as the early-stopping validation set; without
    test sessions training runs the full epoch budget and the report keeps
    only the loss history. Writes checkpoint/config/metrics/report files
    when out_dir is given.
    """
    def build():
        dataset = dataset_from_bundle(bundle, split="train")
        triples = triples_from_bundle(bundle)
        return dataset, triples, build_trainer(dataset, config, triples)

    dataset, triples, trainer = _run_stage("build-graphs", build)
    pairs = _run_stage("preprocess", lambda: test_pairs_from_bundle(bundle))

    metrics_path = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_path = os.path.join(out_dir, "metrics.jsonl")
    history = _run_stage(
        "train", lambda: trainer.fit(valid_pairs=pairs or None,
                                     metrics_path=metrics_path))

    report = {
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "train_sessions": len(dataset.sessions),
        "train_sequences": len(dataset.sequences),
        "test_sequences": len(pairs),
        "epochs_run": len(history),
        "history": history,
    }
    if pairs:
        report["metrics"] = _run_stage(
            "evaluate", lambda: evaluate_ranking(trainer.model, pairs))
    if out_dir is not None:
        checkpoint(trainer, os.path.join(out_dir, "checkpoint.npz"))
        with open(os.path.join(out_dir, "config.txt"), "w") as fh:
            fh.write(config_to_text(config))
        with open(os.path.join(out_dir, "report.json"), "w") as fh:
            json.dump(report, fh, indent=2)
    report["trainer"] = trainer
    return report


def strip_volatile(report: dict) -> dict:
    """Copy of a report without wall-clock fields, for determinism checks."""
    clean = {k: v for k, v in report.items() if k != "trainer"}
    clean["history"] = [{k: v for k, v in rec.items() if k != "wall_seconds"}
                        for rec in report.get("history", ())]
    return clean


def run_sweep(bundle: dict, base_config: TrainConfig, grid: str, out_dir=None) -> dict:
    """One run per grid value; rows plus a [min, max] bracket per metric."""
    if grid not in SWEEP_GRIDS:
        raise ValueError(f"unknown sweep grid {grid!r}, expected one of {sorted(SWEEP_GRIDS)}")
    field_name, values = SWEEP_GRIDS[grid]
    rows = []
    for value in values:
        config = base_config.replace(**{field_name: value})
        report = run_experiment(bundle, config)
        row = {"grid": grid, field_name: value,
               "epochs_run": report["epochs_run"]}
        row.update(report.get("metrics", {}))
        rows.append(row)
    metric_keys = [k for k in rows[0] if k.startswith(("P@", "MRR@"))]
    summary = {key: [min(r[key] for r in rows), max(r[key] for r in rows)]
               for key in metric_keys}
    result = {"grid": grid, "field": field_name, "rows": rows, "summary": summary}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, f"sweep_{grid}.jsonl"), "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
        with open(os.path.join(out_dir, f"sweep_{grid}_summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
    return result


def run_ablations(bundle: dict, base_config: TrainConfig, out_dir=None) -> dict:
    """The full model plus each single-flag variant, one run each."""
    rows = []
    for variant in ABLATION_VARIANTS:
        flags = () if variant == "full" else (variant,)
        config = base_config.replace(ablation=flags)
        report = run_experiment(bundle, config)
        row = {"variant": variant, "epochs_run": report["epochs_run"]}
        row.update(report.get("metrics", {}))
        rows.append(row)
    result = {"rows": rows}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "ablations.jsonl"), "w") as fh:
            for row in rows:
                fh.write(json.dumps(row) + "\n")
    return result


def format_report(report: dict) -> str:
    """Human-readable run summary."""
    lines = [f"train sessions: {report['train_sessions']}",
             f"train sequences: {report['train_sequences']}",
             f"test sequences: {report['test_sequences']}",
             f"epochs run: {report['epochs_run']}"]
    metrics = report.get("metrics")
    if metrics:
        for key in ("P@10", "P@20", "MRR@10", "MRR@20"):
            lines.append(f"{key}: {metrics[key]:.4f}")
    total_wall = sum(rec.get("wall_seconds", 0.0) for rec in report.get("history", ()))
    lines.append(f"total train seconds: {total_wall:.1f}")
    return "\n".join(lines)


def format_sweep(result: dict) -> str:
    lines = [f"sweep over {result['field']}:"]
    for row in result["rows"]:
        cells = [f"{result['field']}={row[result['field']]}"]
        cells += [f"{k}={row[k]:.4f}" for k in row if k.startswith(("P@", "MRR@"))]
        lines.append("  " + "  ".join(cells))
    for key, (lo, hi) in result["summary"].items():
        lines.append(f"{key} in [{lo:.4f}, {hi:.4f}]")
    return "\n".join(lines)


def format_ablations(result: dict) -> str:
    lines = ["variant  " + "  ".join(k for k in result["rows"][0]
                                     if k.startswith(("P@", "MRR@")))]
    for row in result["rows"]:
        metric_cells = [f"{row[k]:.4f}" for k in row if k.startswith(("P@", "MRR@"))]
        lines.append(f"{row['variant']:<7}  " + "  ".join(metric_cells))
    return "\n".join(lines)
