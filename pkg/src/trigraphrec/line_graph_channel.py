"""Line-graph channel: importance-weighted session initialization and
row-stochastic propagation across overlapping sessions.

Initial session embeddings come from the importance extraction step: a
sigmoid query/key similarity over the session's layer-0 item embeddings,
averaged off-diagonal into per-item scores, softmaxed, and used as convex
weights. Propagation then averages each session with its line-graph
neighbors.
"""

import math

import numpy as np
import torch
import torch.nn as nn

from .utils import length_mask, sparse_to_torch, uniform_init_


def similarity_matrix(item_embs: torch.Tensor, query_weight: torch.Tensor,
                      key_weight: torch.Tensor) -> torch.Tensor:
    """C = sigmoid(sigmoid(S Wq^T) sigmoid(S Wk^T)^T) / sqrt(d) for one session."""
    d = item_embs.shape[1]
    q = torch.sigmoid(item_embs @ query_weight.T)
    k = torch.sigmoid(item_embs @ key_weight.T)
    return torch.sigmoid(q @ k.T) / math.sqrt(d)


def importance_scores(similarity: torch.Tensor, divisor: str = "t") -> torch.Tensor:
    """Softmax over mean off-diagonal similarity per item.

    The divisor is t as printed; "t-1" averages over the actual number of
    off-diagonal terms (identical direction, different scale).
    """
    t = similarity.shape[0]
    if t == 0:
        raise ValueError("empty similarity matrix")
    off_diag = similarity.sum(dim=1) - similarity.diagonal()
    if divisor == "t":
        alpha = off_diag / t
    elif divisor == "t-1":
        alpha = off_diag / max(t - 1, 1)
    else:
        raise ValueError(f"divisor must be 't' or 't-1', got {divisor!r}")
    return torch.softmax(alpha, dim=0)


def session_init_embedding(importance: torch.Tensor, item_embs: torch.Tensor) -> torch.Tensor:
    """Convex combination of the session's initial item embeddings."""
    if importance.shape[0] != item_embs.shape[0]:
        raise ValueError(f"{importance.shape[0]} weights vs {item_embs.shape[0]} items")
    return importance @ item_embs


def line_graph_convolve(propagation, session_embs: torch.Tensor) -> torch.Tensor:
    """One step of row-stochastic neighbor averaging."""
    if torch.is_tensor(propagation):
        return torch.sparse.mm(propagation, session_embs) if propagation.is_sparse \
            else propagation @ session_embs
    op = sparse_to_torch(propagation, session_embs.dtype)
    return torch.sparse.mm(op, session_embs)


def encode_line_graph(line_graph, session_embs: torch.Tensor, layers: int) -> torch.Tensor:
    """Propagate `layers` times and average layers 0..L."""
    if layers < 0:
        raise ValueError(f"layers must be non-negative, got {layers}")
    op = sparse_to_torch(line_graph.propagation, session_embs.dtype)
    outputs = [session_embs]
    x = session_embs
    for _ in range(layers):
        x = torch.sparse.mm(op, x)
        outputs.append(x)
    return torch.stack(outputs).mean(dim=0)


class ImportanceExtractor(nn.Module):
    """Batched importance extraction over padded session item embeddings."""

    def __init__(self, dim: int, similarity_dim: int | None = None,
                 divisor: str = "t", dtype=torch.float64):
        super().__init__()
        sim = similarity_dim or dim
        self.divisor = divisor
        self.query_weight = nn.Parameter(torch.zeros(sim, dim, dtype=dtype))
        self.key_weight = nn.Parameter(torch.zeros(sim, dim, dtype=dtype))

    def reset_parameters(self, rng, bound: float):
        for param in self.parameters():
            uniform_init_(param, rng, bound)

    def forward(self, item_embs: torch.Tensor, lengths: torch.Tensor,
                uniform: bool = False) -> torch.Tensor:
        """item_embs: (B, T, d) padded; returns (B, d) initial session embeddings.

        uniform=True bypasses the similarity scores and weights every item
        equally (the importance-extraction ablation).
        """
        b, t, d = item_embs.shape
        mask = length_mask(lengths, t)                               # (B, T) bool
        fmask = mask.to(item_embs.dtype)
        if uniform:
            weights = fmask / lengths.to(item_embs.dtype)[:, None]
            return torch.einsum("bt,btd->bd", weights, item_embs)
        q = torch.sigmoid(item_embs @ self.query_weight.T)
        k = torch.sigmoid(item_embs @ self.key_weight.T)
        sim = torch.sigmoid(q @ k.transpose(1, 2)) / math.sqrt(d)    # (B, T, T)
        sim = sim * fmask[:, None, :]                                # zero invalid columns j
        off_diag = sim.sum(dim=2) - torch.diagonal(sim, dim1=1, dim2=2)
        counts = lengths.to(item_embs.dtype)[:, None]
        if self.divisor == "t":
            alpha = off_diag / counts
        else:
            alpha = off_diag / torch.clamp(counts - 1, min=1)
        alpha = alpha.masked_fill(~mask, -torch.inf)
        weights = torch.softmax(alpha, dim=1)                        # (B, T)
        return torch.einsum("bt,btd->bd", weights, item_embs)


class LineGraphEncoder:
    """Exact per-batch propagation over the global line graph.

    Computing every session's initial embedding each step is wasteful, so a
    batch request expands to the L-hop propagation neighborhood: layer l+1
    rows for a node set only need layer l rows for that set's neighbors.
    When the expansion covers most of the graph the full matrix is used.
    """

    def __init__(self, line_graph, layers: int, dtype=torch.float64, full_threshold: float = 0.5):
        self.line_graph = line_graph
        self.layers = layers
        self.dtype = dtype
        self.full_threshold = full_threshold
        self._full_op = None

    def _frontiers(self, nodes: np.ndarray):
        """frontiers[l] = rows needed at layer l; frontiers[L] = the batch."""
        prop = self.line_graph.propagation
        frontiers = [None] * (self.layers + 1)
        frontiers[self.layers] = np.unique(nodes)
        for level in range(self.layers - 1, -1, -1):
            above = frontiers[level + 1]
            start, end = prop.indptr[above], prop.indptr[above + 1]
            reached = np.concatenate([prop.indices[s:e] for s, e in zip(start, end)]) \
                if len(above) else np.empty(0, dtype=np.int64)
            frontiers[level] = np.union1d(above, reached)
        return frontiers

    def _full_operator(self):
        if self._full_op is None:
            self._full_op = sparse_to_torch(self.line_graph.propagation, self.dtype)
        return self._full_op

    def batch_rows(self, nodes: np.ndarray, init_provider) -> torch.Tensor:
        """Layer-averaged embeddings for the requested line-graph nodes.

        init_provider(node_array) must return the (len(nodes), d) layer-0
        session embeddings for those nodes.
        """
        m = self.line_graph.session_count
        nodes = np.asarray(nodes, dtype=np.int64)
        if self.layers == 0:
            return init_provider(nodes)
        frontiers = self._frontiers(nodes)
        if len(frontiers[0]) >= self.full_threshold * m:
            theta = init_provider(np.arange(m, dtype=np.int64))
            op = self._full_operator()
            total = theta[nodes].clone()
            x = theta
            for _ in range(self.layers):
                x = torch.sparse.mm(op, x)
                total = total + x[nodes]
            return total / (self.layers + 1)

        prop = self.line_graph.propagation
        theta = init_provider(frontiers[0])
        # Positions of the batch inside each frontier (frontiers are sorted).
        total = theta[np.searchsorted(frontiers[0], nodes)].clone()
        x = theta
        for level in range(self.layers):
            rows, cols = frontiers[level + 1], frontiers[level]
            sub = prop[rows][:, cols]
            x = torch.sparse.mm(sparse_to_torch(sub, self.dtype), x)
            total = total + x[np.searchsorted(rows, nodes)]
        return total / (self.layers + 1)
