import numpy as np
import pytest
import torch

from trigraphrec.config import TrainConfig
from trigraphrec.model import FrozenDraws, SessionGraphModel
from trigraphrec.objectives import SampleSets
from trigraphrec.trainer import build_trainer, make_session_batch


def toy_config(**kw):
    base = dict(embedding_dim=6, epochs=1, batch_size=3, sample_count=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def full_batch(dataset):
    return make_session_batch(dataset, np.arange(len(dataset.sequences)))


def test_triples_required_without_nkg(toy_data):
    with pytest.raises(ValueError, match="NKG"):
        SessionGraphModel(5, toy_config(), triples=None, max_len=3)
    model = SessionGraphModel(5, toy_config(ablation="NKG"), triples=None, max_len=3)
    assert model.kg is None and model.kg_readout is None
    with pytest.raises(RuntimeError, match="disabled"):
        model.phase1_loss(np.zeros((1, 3), dtype=np.int64), np.zeros(1, dtype=np.int64))


def test_max_len_must_come_from_somewhere():
    with pytest.raises(ValueError, match="max_len"):
        SessionGraphModel(5, toy_config(ablation="NKG"), triples=None)


def test_draw_noise_respects_wiring(toy_data):
    _, dataset, triples = toy_data
    trainer = build_trainer(dataset, toy_config(), triples=triples)
    noise = trainer.model.draw_noise(np.random.default_rng(0))
    assert noise.shape == (triples.pair_count,)
    assert noise.dtype == torch.float64
    for ablation in ("NDKG", "NKG"):
        t = build_trainer(dataset, toy_config(ablation=ablation), triples=triples)
        assert t.model.draw_noise(np.random.default_rng(0)) is None


def test_phase2_deterministic_under_seeded_rng(toy_data):
    _, dataset, triples = toy_data
    trainer = build_trainer(dataset, toy_config(), triples=triples)
    batch = full_batch(dataset)
    rec1, ssl1 = trainer.model.phase2_losses(batch, rng=np.random.default_rng(7))
    rec2, ssl2 = trainer.model.phase2_losses(batch, rng=np.random.default_rng(7))
    assert torch.equal(rec1, rec2) and torch.equal(ssl1, ssl2)


def test_frozen_draws_pin_the_losses(toy_data):
    _, dataset, triples = toy_data
    trainer = build_trainer(dataset, toy_config(), triples=triples)
    batch = full_batch(dataset)
    b = len(dataset.sequences)
    rng = np.random.default_rng(3)
    samples = SampleSets(*(rng.integers(5, size=(b, 2)) for _ in range(4)))
    lo = FrozenDraws(torch.full((triples.pair_count,), 0.1, dtype=torch.float64), samples)
    hi = FrozenDraws(torch.full((triples.pair_count,), 0.9, dtype=torch.float64), samples)
    rec1, ssl1 = trainer.model.phase2_losses(batch, frozen=lo)
    rec2, ssl2 = trainer.model.phase2_losses(batch, frozen=lo)
    assert torch.equal(rec1, rec2) and torch.equal(ssl1, ssl2)
    rec3, ssl3 = trainer.model.phase2_losses(batch, frozen=hi)
    # Edge noise reaches the recommendation loss through the KG channel but
    # never touches the hypergraph or line-graph paths behind the SSL loss.
    assert not torch.equal(rec1, rec3)
    assert torch.equal(ssl1, ssl3)
    total = rec1 + ssl1
    total.backward()


def test_scores_truncate_to_recent_events(toy_data):
    _, dataset, triples = toy_data
    trainer = build_trainer(dataset, toy_config(), triples=triples)
    model = trainer.model
    assert model.max_len == 3
    with torch.no_grad():
        long = model.scores([[1, 2, 3, 4, 5]])
        short = model.scores([[3, 4, 5]])
    assert torch.equal(long, short)
    assert long.shape == (1, 5)


@pytest.mark.parametrize("ablation", ["", "NP", "NKG", "NDKG", "NIEM",
                                      "NP,NIEM", "NKG,NP,NDKG,NIEM"])
def test_ablation_variants_train_and_score(toy_data, ablation):
    _, dataset, triples = toy_data
    trainer = build_trainer(dataset, toy_config(ablation=ablation), triples=triples)
    stats = trainer.train_epoch()
    assert np.isfinite(stats["rec_loss"]) and np.isfinite(stats["ssl_loss"])
    if "NKG" in ablation:
        assert stats["kg_loss"] == 0.0
        assert "kg" not in stats["phases"]
    else:
        assert stats["kg_loss"] != 0.0
    with torch.no_grad():
        scores = trainer.model.scores([[1, 2], [4]])
    assert scores.shape == (2, 5)
    assert torch.isfinite(scores).all()


def test_nkg_and_full_models_disagree(toy_data):
    _, dataset, triples = toy_data
    full = build_trainer(dataset, toy_config(), triples=triples).model
    nkg = build_trainer(dataset, toy_config(ablation="NKG"), triples=triples).model
    with torch.no_grad():
        assert not torch.allclose(full.scores([[1, 2]]), nkg.scores([[1, 2]]))


def test_shape_manifest_matches_parameters(toy_data):
    _, dataset, triples = toy_data
    model = build_trainer(dataset, toy_config(), triples=triples).model
    manifest = model.shape_manifest()
    named = dict(model.named_parameters())
    assert set(manifest) == set(named)
    for name, shape in manifest.items():
        assert shape == list(named[name].shape)
    # The KG entity table covers items, attributes, and the padding row.
    assert manifest["kg.entity_embeddings"][0] == triples.entity_count + 1
