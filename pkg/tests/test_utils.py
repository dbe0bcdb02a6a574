import numpy as np
import scipy.sparse as sp
import torch

from trigraphrec.utils import (length_mask, pad_sequences, sparse_to_torch,
                               uniform_init_)


def test_sparse_to_torch_round_trip():
    rng = np.random.default_rng(0)
    dense = np.where(rng.uniform(size=(6, 4)) < 0.4, rng.normal(size=(6, 4)), 0.0)
    converted = sparse_to_torch(sp.csr_matrix(dense), torch.float64)
    assert converted.is_sparse
    np.testing.assert_allclose(converted.to_dense().numpy(), dense, atol=0)


def test_uniform_init_range_and_reproducibility():
    p1 = torch.nn.Parameter(torch.zeros(50, 20, dtype=torch.float64))
    p2 = torch.nn.Parameter(torch.zeros(50, 20, dtype=torch.float64))
    uniform_init_(p1, np.random.default_rng(9), 0.25)
    uniform_init_(p2, np.random.default_rng(9), 0.25)
    assert torch.equal(p1.data, p2.data)
    assert float(p1.data.abs().max()) <= 0.25
    assert float(p1.data.std()) > 0.05


def test_pad_sequences():
    padded, lengths = pad_sequences([[3, 1], [7], [2, 4, 6]])
    assert padded.tolist() == [[3, 1, 0], [7, 0, 0], [2, 4, 6]]
    assert lengths.tolist() == [2, 1, 3]
    padded, lengths = pad_sequences([[5], [9]], pad_value=-1)
    assert padded.tolist() == [[5], [9]]
    empty, lengths = pad_sequences([])
    assert empty.shape == (0, 1) and lengths.shape == (0,)


def test_length_mask():
    mask = length_mask(torch.tensor([2, 0, 3]), 3)
    assert mask.tolist() == [[True, True, False],
                             [False, False, False],
                             [True, True, True]]
