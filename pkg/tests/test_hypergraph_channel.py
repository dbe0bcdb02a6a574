import numpy as np
import pytest
import torch

from trigraphrec.graphs import build_hypergraph
from trigraphrec.hypergraph_channel import (HypergraphEncoder, encode,
                                            hypergraph_convolve)

from conftest import random_item_sets


def convolve_oracle(item_sets, x):
    """Explicit node -> hyperedge -> node mean loops."""
    out = x.copy()
    edge_means = [x[list(s)].mean(axis=0) for s in item_sets]
    n = x.shape[0]
    for i in range(1, n):
        mine = [edge_means[e] for e, s in enumerate(item_sets) if i in s]
        if mine:
            out[i] = np.mean(mine, axis=0)
    return out


def test_single_session_mean():
    hg = build_hypergraph([{1, 2, 3}], item_count=3)
    x = torch.tensor([[0.0], [1.0], [2.0], [6.0]], dtype=torch.float64)
    out = hypergraph_convolve(hg, x)
    # Every member becomes the hyperedge mean.
    np.testing.assert_allclose(out[1:].numpy().ravel(), [3.0, 3.0, 3.0])


def test_shared_item_averages_edge_means():
    hg = build_hypergraph([{1, 2}, {2, 3}], item_count=3)
    x = torch.tensor([[0.0], [1.0], [2.0], [4.0]], dtype=torch.float64)
    out = hypergraph_convolve(hg, x)
    assert float(out[2]) == pytest.approx(0.5 * ((1 + 2) / 2 + (2 + 4) / 2))


def test_zero_degree_passthrough_and_shape_check():
    hg = build_hypergraph([{1}], item_count=3)
    x = torch.randn(4, 2, dtype=torch.float64)
    out = hypergraph_convolve(hg, x)
    assert torch.allclose(out[2], x[2]) and torch.allclose(out[3], x[3])
    with pytest.raises(ValueError, match="rows"):
        hypergraph_convolve(hg, x[:3])


def test_idempotent_after_one_step_on_shared_edge():
    # With a single hyperedge covering every item, step one lands on the
    # shared mean and further steps change nothing.
    hg = build_hypergraph([{1, 2, 3, 4}], item_count=4)
    x = torch.randn(5, 3, dtype=torch.float64)
    once = hypergraph_convolve(hg, x)
    twice = hypergraph_convolve(hg, once)
    assert torch.allclose(once[1:], twice[1:], atol=1e-12)


def test_convolution_matches_loop_oracle():
    rng = np.random.default_rng(5)
    for _ in range(30):
        n = int(rng.integers(2, 12))
        sets = random_item_sets(rng, max_sessions=6, universe=n)
        hg = build_hypergraph(sets, item_count=n)
        x = rng.normal(size=(n + 1, 3))
        out = hypergraph_convolve(hg, torch.from_numpy(x)).numpy()
        expected = convolve_oracle(sets, x)
        # Padding row never joins a hyperedge, so it passes through too.
        assert np.abs(out - expected).max() <= 1e-9


def test_encode_layer_stack():
    hg = build_hypergraph([{1, 2}], item_count=2)
    x = torch.randn(3, 2, dtype=torch.float64)
    avg, outputs = encode(hg, x, layers=2)
    assert len(outputs) == 3
    assert torch.allclose(avg, (outputs[0] + outputs[1] + outputs[2]) / 3)
    avg0, outputs0 = encode(hg, x, layers=0)
    assert torch.equal(avg0, x) and len(outputs0) == 1
    with pytest.raises(ValueError, match="non-negative"):
        encode(hg, x, layers=-1)


def test_encoder_module():
    hg = build_hypergraph([{1, 2}, {2, 3}], item_count=3)
    enc = HypergraphEncoder(3, dim=4, layers=1)
    with pytest.raises(RuntimeError, match="attach_graph"):
        enc()
    enc.reset_parameters(np.random.default_rng(0), 0.5)
    enc.attach_graph(hg)
    avg, outputs = enc()
    with torch.no_grad():
        expected_avg, expected_outputs = encode(hg, enc.item_embeddings, 1)
        assert torch.allclose(avg, expected_avg)
        assert torch.allclose(outputs[1], expected_outputs[1])
    wrong = build_hypergraph([{1}], item_count=2)
    with pytest.raises(ValueError, match="expects"):
        enc.attach_graph(wrong)
