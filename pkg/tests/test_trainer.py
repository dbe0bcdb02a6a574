import json

import numpy as np
import pytest
import torch

import trigraphrec.trainer as trainer_mod
from trigraphrec.config import TrainConfig
from trigraphrec.trainer import (Trainer, build_trainer, checkpoint,
                                 evaluate_ranking, restore, session_batches)

VALID_PAIRS = [((1, 2), 3), ((2, 3), 4), ((3, 4), 5), ((5,), 1)]


def toy_config(**kw):
    base = dict(embedding_dim=6, epochs=2, batch_size=3, sample_count=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def make_trainer(toy_data, **kw):
    _, dataset, triples = toy_data
    return build_trainer(dataset, toy_config(**kw), triples=triples)


def state_equal(a, b):
    sa, sb = a.state_dict(), b.state_dict()
    return set(sa) == set(sb) and all(torch.equal(sa[k], sb[k]) for k in sa)


def test_session_batches_partition():
    batches = session_batches(10, 3, np.random.default_rng(0))
    assert [len(b) for b in batches] == [3, 3, 3, 1]
    assert sorted(np.concatenate(batches)) == list(range(10))


def test_zero_learning_rate_leaves_parameters_bitwise(toy_data):
    trainer = make_trainer(toy_data, learning_rate=0.0)
    before = {k: v.clone() for k, v in trainer.model.state_dict().items()}
    trainer.train_epoch()
    for k, v in trainer.model.state_dict().items():
        assert torch.equal(before[k], v), k


def test_kg_phase_strictly_precedes_rec_phase(toy_data):
    trainer = make_trainer(toy_data)
    stats = trainer.train_epoch()
    phases = stats["phases"]
    assert "kg" in phases and "rec" in phases
    last_kg = max(i for i, p in enumerate(phases) if p == "kg")
    first_rec = min(i for i, p in enumerate(phases) if p == "rec")
    assert last_kg < first_rec
    # Batch counters restart per phase and increase monotonically.
    for phase in ("kg", "rec"):
        ids = [b for p, b in trainer.step_log if p == phase]
        assert ids == list(range(len(ids)))


def test_two_trainers_stay_bitwise_identical(toy_data):
    t1 = make_trainer(toy_data)
    t2 = make_trainer(toy_data)
    assert state_equal(t1.model, t2.model)
    for _ in range(2):
        s1, s2 = t1.train_epoch(), t2.train_epoch()
        assert s1 == s2
    assert state_equal(t1.model, t2.model)


def test_evaluate_ranking_report(toy_data):
    trainer = make_trainer(toy_data)
    report = evaluate_ranking(trainer.model, VALID_PAIRS)
    assert set(report) == {"cases", "P@10", "P@20", "MRR@10", "MRR@20"}
    assert report["cases"] == 4
    # Five items: every target always lands inside the top 10.
    assert report["P@10"] == 1.0
    assert report == evaluate_ranking(trainer.model, VALID_PAIRS)
    with pytest.raises(ValueError, match="empty"):
        evaluate_ranking(trainer.model, [])


def test_early_stopping_restores_best_state(toy_data, monkeypatch):
    scripted = iter([0.5, 0.9, 0.3, 0.2, 0.1])
    snapshots = []

    def fake_eval(model, pairs, ks=(10, 20), batch_size=512):
        snapshots.append({k: v.detach().clone() for k, v in model.state_dict().items()})
        p20 = next(scripted)
        return {"P@10": p20, "P@20": p20, "MRR@10": p20, "MRR@20": p20}

    monkeypatch.setattr(trainer_mod, "evaluate_ranking", fake_eval)
    trainer = make_trainer(toy_data, epochs=10, patience=2)
    history = trainer.fit(valid_pairs=VALID_PAIRS)
    # Peak at epoch 2, then two stale epochs exhaust the patience.
    assert [h["epoch"] for h in history] == [1, 2, 3, 4]
    best = snapshots[1]
    for k, v in trainer.model.state_dict().items():
        assert torch.equal(best[k], v), k


def test_fit_without_validation_runs_full_budget(toy_data):
    trainer = make_trainer(toy_data, epochs=3, patience=1)
    history = trainer.fit()
    assert len(history) == 3
    assert "P@20" not in history[0]


def test_metrics_jsonl(toy_data, tmp_path):
    path = tmp_path / "metrics.jsonl"
    trainer = make_trainer(toy_data, epochs=2)
    history = trainer.fit(valid_pairs=VALID_PAIRS, metrics_path=path)
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    assert lines == history
    for epoch, record in enumerate(lines, 1):
        assert record["epoch"] == epoch
        for key in ("L_KG", "L_rec", "L_ssl", "P@10", "P@20",
                    "MRR@10", "MRR@20", "wall_seconds"):
            assert key in record, key


def test_non_finite_loss_names_the_phase(toy_data):
    trainer = make_trainer(toy_data)
    with torch.no_grad():
        trainer.model.kg.entity_embeddings.fill_(float("nan"))
    with pytest.raises(RuntimeError, match="non-finite loss .* kg batch 0"):
        trainer.train_epoch()


def test_checkpoint_roundtrip_resumes_training_exactly(toy_data, tmp_path):
    path = tmp_path / "ckpt.npz"
    t1 = make_trainer(toy_data)
    t1.train_epoch()
    t1.train_epoch()
    checkpoint(t1, path)
    t2 = make_trainer(toy_data)
    restore(t2, path)
    assert t2.epoch == 2
    assert state_equal(t1.model, t2.model)
    # Identical post-restore RNGs must give bitwise-identical further training,
    # which only holds if the optimizer moments also survived the round trip.
    t1.rng = np.random.default_rng(555)
    t2.rng = np.random.default_rng(555)
    s1, s2 = t1.train_epoch(), t2.train_epoch()
    assert s1 == s2
    assert state_equal(t1.model, t2.model)


def test_restore_refuses_config_hash_mismatch(toy_data, tmp_path):
    path = tmp_path / "ckpt.npz"
    t1 = make_trainer(toy_data)
    t1.train_epoch()
    checkpoint(t1, path)
    other = make_trainer(toy_data, learning_rate=0.01)
    before = {k: v.clone() for k, v in other.model.state_dict().items()}
    with pytest.raises(RuntimeError, match="config hash"):
        restore(other, path)
    for k, v in other.model.state_dict().items():
        assert torch.equal(before[k], v)
    restore(other, path, force=True)
    assert state_equal(t1.model, other.model)


def test_restore_refuses_shape_mismatch_even_forced(toy_data, tmp_path):
    path = tmp_path / "ckpt.npz"
    checkpoint(make_trainer(toy_data), path)
    wider = make_trainer(toy_data, embedding_dim=8)
    with pytest.raises(RuntimeError, match="shapes do not match"):
        restore(wider, path, force=True)


def test_restore_refuses_damaged_files(toy_data, tmp_path):
    trainer = make_trainer(toy_data)
    no_manifest = tmp_path / "no_manifest.npz"
    np.savez(no_manifest, **{"param:x": np.zeros(2)})
    with pytest.raises(RuntimeError, match="no manifest"):
        restore(trainer, no_manifest)
    garbage = tmp_path / "garbage.npz"
    garbage.write_bytes(b"not a checkpoint")
    with pytest.raises(RuntimeError, match="unreadable"):
        restore(trainer, garbage)
