"""Reverse position encoding and the soft attention session readout.

Both graph channels summarize a session the same way but with their own
parameter sets: each item embedding is fused with a position vector counted
from the session's end, scored against the session mean and the last item,
and the resulting attention weights (left unnormalized) combine the raw,
non-positional item embeddings.
"""

import torch
import torch.nn as nn

from .utils import length_mask, uniform_init_


def reverse_position_encode(item_embs: torch.Tensor, position_table: torch.Tensor,
                            weight: torch.Tensor, bias: torch.Tensor) -> torch.Tensor:
    """Fuse a session's item embeddings with reversed position vectors.

    Item at 1-based position t of an m-item session uses position vector
    m - t + 1, so the last item always pairs with vector 1.
    """
    m, d = item_embs.shape
    if m > position_table.shape[0] - 1:
        raise ValueError(f"session length {m} exceeds position table size "
                         f"{position_table.shape[0] - 1}")
    positions = position_table[torch.arange(m, 0, -1)]
    return torch.tanh(torch.cat([item_embs, positions], dim=-1) @ weight.T + bias)


def soft_attention_readout(item_embs, positional_embs, last_emb, mean_emb,
                           mean_weight, item_weight, last_weight,
                           score_vector, score_bias) -> torch.Tensor:
    """Attention-weighted sum of one session's item embeddings.

    alpha_t = f . sigmoid(W2 x_mean + W3 x*_t + W4 x_last + c); the weights
    are used as-is (no softmax) and multiply the non-positional embeddings.
    """
    inner = (mean_emb @ mean_weight.T + positional_embs @ item_weight.T
             + last_emb @ last_weight.T + score_bias)
    alpha = torch.sigmoid(inner) @ score_vector  # (m,)
    return alpha @ item_embs


class SessionReadout(nn.Module):
    """Batched readout for one channel; see the module docstring."""

    def __init__(self, dim: int, max_len: int, dtype=torch.float64):
        super().__init__()
        self.dim = dim
        self.max_len = max_len
        kw = {"dtype": dtype}
        self.position_table = nn.Parameter(torch.zeros(max_len + 1, dim, **kw))  # row 0 unused
        self.combine_weight = nn.Parameter(torch.zeros(dim, 2 * dim, **kw))
        self.combine_bias = nn.Parameter(torch.zeros(dim, **kw))
        self.mean_weight = nn.Parameter(torch.zeros(dim, dim, **kw))
        self.item_weight = nn.Parameter(torch.zeros(dim, dim, **kw))
        self.last_weight = nn.Parameter(torch.zeros(dim, dim, **kw))
        self.score_vector = nn.Parameter(torch.zeros(dim, **kw))
        self.score_bias = nn.Parameter(torch.zeros(dim, **kw))

    def reset_parameters(self, rng, bound: float):
        for param in self.parameters():
            uniform_init_(param, rng, bound)

    def forward(self, item_embs: torch.Tensor, lengths: torch.Tensor,
                use_position: bool = True) -> torch.Tensor:
        """item_embs: (B, T, d) padded with arbitrary rows beyond each length."""
        b, t, d = item_embs.shape
        if int(lengths.max()) > self.max_len:
            raise ValueError(f"session length {int(lengths.max())} exceeds "
                             f"position table size {self.max_len}")
        mask = length_mask(lengths, t).to(item_embs.dtype)          # (B, T)
        counts = lengths.to(item_embs.dtype)[:, None]
        mean = (item_embs * mask[:, :, None]).sum(1) / counts       # (B, d)
        last = item_embs[torch.arange(b), lengths - 1]              # (B, d)

        if use_position:
            slots = torch.arange(t)[None, :]
            pos_idx = (lengths[:, None] - slots).clamp(min=1)       # m - t + 1 at valid slots
            positions = self.position_table[pos_idx]                # (B, T, d)
        else:
            positions = torch.zeros_like(item_embs)
        combined = torch.tanh(
            torch.cat([item_embs, positions], dim=-1) @ self.combine_weight.T
            + self.combine_bias)                                    # (B, T, d)

        inner = (mean @ self.mean_weight.T)[:, None, :] \
            + combined @ self.item_weight.T \
            + (last @ self.last_weight.T)[:, None, :] \
            + self.score_bias
        alpha = torch.sigmoid(inner) @ self.score_vector            # (B, T)
        alpha = alpha * mask
        return torch.einsum("bt,btd->bd", alpha, item_embs)
