"""Two-phase training loop, ranking evaluation, and checkpointing.

Each epoch first steps the translational triple loss over every KG batch,
then steps the recommendation plus weighted contrastive loss over every
session batch. The step log records the phase of each optimizer step so the
ordering stays checkable. All randomness (shuffles, edge noise, negative
tails, contrastive draws) comes from one numpy Generator seeded by the
config, which makes whole runs replayable.
"""

import json
import time
import io

import numpy as np
import torch

from . import metrics, objectives
from .config import TrainConfig, apply_ablation
from .graphs import build_hypergraph, build_line_graph
from .kg_channel import negative_tails
from .model import SessionBatch, SessionGraphModel
from .utils import pad_sequences

EVAL_BATCH = 512
REPORT_KS = (10, 20)


def session_batches(sequence_count: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches over training pairs."""
    order = rng.permutation(sequence_count)
    return [order[i: i + batch_size] for i in range(0, sequence_count, batch_size)]


def make_session_batch(dataset, pair_ids: np.ndarray) -> SessionBatch:
    prefixes, lengths = pad_sequences([dataset.sequences[i][0] for i in pair_ids])
    targets = torch.tensor([dataset.sequences[i][1] for i in pair_ids], dtype=torch.long)
    return SessionBatch(prefixes, lengths, targets, np.asarray(pair_ids, dtype=np.int64))


def evaluate_ranking(model: SessionGraphModel, pairs, ks=REPORT_KS,
                     batch_size: int = EVAL_BATCH) -> dict:
    """P@K and MRR@K over (prefix, target) pairs with the deterministic mask."""
    if not pairs:
        raise ValueError("cannot evaluate on an empty test set")
    ranks = []
    model.eval()
    with torch.no_grad():
        for start in range(0, len(pairs), batch_size):
            chunk = pairs[start: start + batch_size]
            scores = model.scores([list(p) for p, _ in chunk]).numpy()
            targets = np.array([label - 1 for _, label in chunk])
            ranks.append(metrics.rank_targets(scores, targets))
    model.train()
    return metrics.ranking_report(np.concatenate(ranks), ks)


class Trainer:
    """Owns the model, the optimizer, and the run RNG for one training run."""

    def __init__(self, model: SessionGraphModel, dataset, config: TrainConfig,
                 rng: np.random.Generator | None = None):
        self.model = model
        self.dataset = dataset
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng(config.seed)
        self.optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
        self.epoch = 0
        self.step_log = []   # (phase, batch index) per optimizer step, current epoch

    # -- single epoch ---------------------------------------------------------

    def _check_finite(self, loss: torch.Tensor, phase: str, batch_idx: int):
        if not torch.isfinite(loss):
            raise RuntimeError(f"non-finite loss in epoch {self.epoch} "
                               f"{phase} batch {batch_idx}: {float(loss.detach())}")

    def train_epoch(self) -> dict:
        """One pass of phase 1 (KG) then phase 2 (rec + SSL); mean losses."""
        cfg = self.config
        self.step_log = []
        kg_losses = []
        triples = self.model.triples
        if triples is not None:
            triple_set = triples.triple_set()
            order = self.rng.permutation(len(triples.triples))
            for bi, start in enumerate(range(0, len(order), cfg.batch_size)):
                rows = triples.triples[order[start: start + cfg.batch_size]]
                negs = negative_tails(rows, triples.entity_count, triple_set, self.rng)
                loss = self.model.phase1_loss(rows, negs)
                self._check_finite(loss, "kg", bi)
                self.optimizer.zero_grad()
                loss.backward()
                self.optimizer.step()
                kg_losses.append(float(loss.detach()))
                self.step_log.append(("kg", bi))

        rec_losses, ssl_losses = [], []
        for bi, pair_ids in enumerate(session_batches(len(self.dataset.sequences),
                                                      cfg.batch_size, self.rng)):
            batch = make_session_batch(self.dataset, pair_ids)
            l_rec, l_ssl = self.model.phase2_losses(batch, rng=self.rng)
            loss = l_rec + cfg.contrastive_weight * l_ssl
            self._check_finite(loss, "rec", bi)
            self.optimizer.zero_grad()
            loss.backward()
            self.optimizer.step()
            rec_losses.append(float(l_rec.detach()))
            ssl_losses.append(float(l_ssl.detach()))
            self.step_log.append(("rec", bi))

        self.epoch += 1
        return {
            "kg_loss": float(np.mean(kg_losses)) if kg_losses else 0.0,
            "rec_loss": float(np.mean(rec_losses)) if rec_losses else 0.0,
            "ssl_loss": float(np.mean(ssl_losses)) if ssl_losses else 0.0,
            "phases": [phase for phase, _ in self.step_log],
        }

    # -- full run ---------------------------------------------------------------

    def fit(self, valid_pairs=None, metrics_path=None, log=None) -> list[dict]:
        """Train up to config.epochs with early stopping on validation P@20.

        valid_pairs: (prefix, target) pairs scored after each epoch; without
        them the run goes the full epoch budget. Returns the per-epoch
        records that also land in the JSONL file at metrics_path.
        """
        cfg = self.config
        history = []
        best_p20 = -1.0
        best_state = None
        stale = 0
        sink = open(metrics_path, "w") if metrics_path else None
        try:
            for _ in range(cfg.epochs):
                start = time.perf_counter()
                epoch_stats = self.train_epoch()
                record = {
                    "epoch": self.epoch,
                    "L_KG": epoch_stats["kg_loss"],
                    "L_rec": epoch_stats["rec_loss"],
                    "L_ssl": epoch_stats["ssl_loss"],
                }
                if valid_pairs:
                    report = evaluate_ranking(self.model, valid_pairs)
                    record.update({
                        "P@10": report["P@10"], "P@20": report["P@20"],
                        "MRR@10": report["MRR@10"], "MRR@20": report["MRR@20"],
                    })
                record["wall_seconds"] = time.perf_counter() - start
                history.append(record)
                if sink:
                    sink.write(json.dumps(record) + "\n")
                    sink.flush()
                if log:
                    log(record)
                if valid_pairs:
                    if record["P@20"] > best_p20:
                        best_p20 = record["P@20"]
                        best_state = {k: v.detach().clone()
                                      for k, v in self.model.state_dict().items()}
                        stale = 0
                    else:
                        stale += 1
                        if stale >= cfg.patience:
                            break
        finally:
            if sink:
                sink.close()
        if best_state is not None:
            self.model.load_state_dict(best_state)
        return history


# -- checkpoints ----------------------------------------------------------------

def checkpoint(trainer: Trainer, path):
    """Write parameters, Adam moments, and a shape manifest to one npz file."""
    arrays = {}
    shapes = {}
    for name, param in trainer.model.named_parameters():
        arrays[f"param:{name}"] = param.detach().numpy()
        shapes[name] = list(param.shape)
    state = trainer.optimizer.state_dict()["state"]
    params = list(trainer.model.parameters())
    for idx, moments in state.items():
        arrays[f"adam:{idx}:exp_avg"] = moments["exp_avg"].numpy()
        arrays[f"adam:{idx}:exp_avg_sq"] = moments["exp_avg_sq"].numpy()
        arrays[f"adam:{idx}:step"] = np.asarray(float(moments["step"]))
        if list(moments["exp_avg"].shape) != list(params[idx].shape):
            raise RuntimeError(f"optimizer moment {idx} shape drifted")
    manifest = {
        "config_hash": trainer.config.hash(),
        "epoch": trainer.epoch,
        "shapes": shapes,
    }
    arrays["manifest"] = np.frombuffer(json.dumps(manifest).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def restore(trainer: Trainer, path, force: bool = False):
    """Load a checkpoint into an existing trainer; the trainer is untouched
    on any error. Config-hash mismatches are refused unless force=True."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        data = np.load(io.BytesIO(blob))
        loaded = {key: data[key] for key in data.files}
    except Exception as exc:
        raise RuntimeError(f"unreadable checkpoint {path}: {exc}") from exc
    if "manifest" not in loaded:
        raise RuntimeError(f"checkpoint {path} has no manifest")
    manifest = json.loads(bytes(loaded["manifest"]).decode())
    if manifest["config_hash"] != trainer.config.hash():
        if not force:
            raise RuntimeError("checkpoint config hash does not match the current "
                               "config; pass force=True to load anyway")
    model_shapes = {name: list(p.shape) for name, p in trainer.model.named_parameters()}
    diff = {name: (manifest["shapes"].get(name), model_shapes.get(name))
            for name in set(manifest["shapes"]) | set(model_shapes)
            if manifest["shapes"].get(name) != model_shapes.get(name)}
    if diff:
        raise RuntimeError(f"checkpoint shapes do not match the model: {diff}")
    staged = {}
    for name in model_shapes:
        staged[name] = torch.from_numpy(loaded[f"param:{name}"])
    with torch.no_grad():
        for name, param in trainer.model.named_parameters():
            param.copy_(staged[name])
    opt_state = trainer.optimizer.state_dict()
    params = list(trainer.model.parameters())
    new_state = {}
    for idx in range(len(params)):
        key = f"adam:{idx}:exp_avg"
        if key in loaded:
            new_state[idx] = {
                "step": torch.tensor(float(loaded[f"adam:{idx}:step"])),
                "exp_avg": torch.from_numpy(loaded[key]),
                "exp_avg_sq": torch.from_numpy(loaded[f"adam:{idx}:exp_avg_sq"]),
            }
    opt_state["state"] = new_state
    trainer.optimizer.load_state_dict(opt_state)
    trainer.epoch = int(manifest["epoch"])
    return trainer


# -- assembly -------------------------------------------------------------------

def build_trainer(dataset, config: TrainConfig, triples=None) -> Trainer:
    """Graphs, model, init, and optimizer from a training dataset."""
    wiring = apply_ablation(config)
    item_sets = dataset.prefix_item_sets()
    hypergraph = build_hypergraph(item_sets, dataset.item_count)
    line_graph = build_line_graph(item_sets)
    model = SessionGraphModel(dataset.item_count, config, wiring,
                              triples=triples if wiring.use_kg else None,
                              max_len=max(dataset.max_prefix_len, 1))
    rng = np.random.default_rng(config.seed)
    model.reset_parameters(rng)
    model.attach_graphs(hypergraph, line_graph, dataset.sequences)
    return Trainer(model, dataset, config, rng)
