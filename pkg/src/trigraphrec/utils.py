"""Shared torch helpers: sparse conversion, seeded parameter init, padding."""

import numpy as np
import torch


def sparse_to_torch(matrix, dtype) -> torch.Tensor:
    """Convert a scipy sparse matrix to a coalesced torch COO tensor."""
    coo = matrix.tocoo()
    indices = torch.from_numpy(np.vstack([coo.row, coo.col])).long()
    values = torch.from_numpy(coo.data).to(dtype)
    return torch.sparse_coo_tensor(indices, values, size=coo.shape,
                                   check_invariants=False).coalesce()


def uniform_init_(param: torch.nn.Parameter, rng: np.random.Generator, bound: float):
    """Fill a parameter with uniform(-bound, bound) draws from a shared numpy
    generator, so initialization is reproducible independent of torch's
    global RNG state."""
    values = rng.uniform(-bound, bound, size=tuple(param.shape))
    with torch.no_grad():
        param.copy_(torch.from_numpy(values).to(param.dtype))


def pad_sequences(prefixes, pad_value: int = 0):
    """Stack variable-length ID sequences into a (B, T) long tensor plus lengths."""
    lengths = torch.tensor([len(p) for p in prefixes], dtype=torch.long)
    t = int(lengths.max().item()) if len(prefixes) else 0
    out = torch.full((len(prefixes), max(t, 1)), pad_value, dtype=torch.long)
    for b, p in enumerate(prefixes):
        out[b, : len(p)] = torch.as_tensor(p, dtype=torch.long)
    return out, lengths


def length_mask(lengths: torch.Tensor, t: int) -> torch.Tensor:
    """(B, T) boolean mask of valid positions."""
    return torch.arange(t, device=lengths.device)[None, :] < lengths[:, None]
