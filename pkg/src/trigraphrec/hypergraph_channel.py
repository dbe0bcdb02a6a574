"""Hypergraph channel: two-stage mean convolution over session hyperedges.

The convolution D^-1 H W B^-1 H^T X first averages each hyperedge's member
embeddings, then averages each item's hyperedge embeddings. It is linear:
no weight matrix, no nonlinearity. Items absent from every session keep
their input rows unchanged.
"""

import torch
import torch.nn as nn

from .kg_channel import average_layers
from .utils import sparse_to_torch, uniform_init_


def hypergraph_convolve(hypergraph, item_embs: torch.Tensor) -> torch.Tensor:
    """One convolution step on an (N+1, d) embedding matrix."""
    if item_embs.shape[0] != hypergraph.incidence.shape[0]:
        raise ValueError(f"expected {hypergraph.incidence.shape[0]} rows "
                         f"(items plus padding), got {item_embs.shape[0]}")
    op = sparse_to_torch(hypergraph.propagation_matrix(), item_embs.dtype)
    return torch.sparse.mm(op, item_embs)


def encode(hypergraph, item_embs: torch.Tensor, layers: int):
    """Apply the convolution `layers` times and average layers 0..L."""
    if layers < 0:
        raise ValueError(f"layers must be non-negative, got {layers}")
    op = sparse_to_torch(hypergraph.propagation_matrix(), item_embs.dtype)
    outputs = [item_embs]
    x = item_embs
    for _ in range(layers):
        x = torch.sparse.mm(op, x)
        outputs.append(x)
    return average_layers(outputs), outputs


class HypergraphEncoder(nn.Module):
    """Item embedding table plus the cached convolution operator."""

    def __init__(self, item_count: int, dim: int, layers: int, dtype=torch.float64):
        super().__init__()
        self.item_count = item_count
        self.layers = layers
        self.item_embeddings = nn.Parameter(torch.zeros(item_count + 1, dim, dtype=dtype))
        self._operator = None
        self._dtype = dtype

    def reset_parameters(self, rng, bound: float):
        uniform_init_(self.item_embeddings, rng, bound)

    def attach_graph(self, hypergraph):
        if hypergraph.item_count != self.item_count:
            raise ValueError(f"hypergraph covers {hypergraph.item_count} items, "
                             f"encoder expects {self.item_count}")
        self._operator = sparse_to_torch(hypergraph.propagation_matrix(), self._dtype)

    def forward(self):
        if self._operator is None:
            raise RuntimeError("attach_graph was never called")
        outputs = [self.item_embeddings]
        x = self.item_embeddings
        for _ in range(self.layers):
            x = torch.sparse.mm(self._operator, x)
            outputs.append(x)
        return average_layers(outputs), outputs
