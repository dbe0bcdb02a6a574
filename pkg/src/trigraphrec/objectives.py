"""Training objectives: recommendation loss, cross-channel contrastive loss
with top-K positives and hard negatives, and their weighted combination.

Probability vectors here are indexed by score position: position i refers
to item i+1 because item embeddings drop their padding row before scoring.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F


def channel_prediction(item_embs: torch.Tensor, session_emb: torch.Tensor) -> torch.Tensor:
    """Softmax over all item scores for one session: softmax(X theta)."""
    if item_embs.shape[-1] != session_emb.shape[-1]:
        raise ValueError(f"dim mismatch: items {item_embs.shape[-1]} vs "
                         f"session {session_emb.shape[-1]}")
    return torch.softmax(item_embs @ session_emb, dim=-1)


def channel_predictions(item_embs: torch.Tensor, session_embs: torch.Tensor) -> torch.Tensor:
    """Batched form: (N, d) x (B, d) -> (B, N) probability rows."""
    return torch.softmax(session_embs @ item_embs.T, dim=-1)


def draw_samples(probs: np.ndarray, k: int, rng: np.random.Generator,
                 pool_fraction: float = 0.1):
    """Top-K positives and K hard negatives from one probability vector.

    Positives are the K highest-probability positions with ties broken by
    lower index. Negatives are drawn uniformly without replacement from the
    top ceil(pool_fraction * N) positions minus the positives; when that
    pool is too small it widens to every non-positive position.
    Returns 0-based positions into probs.
    """
    n = len(probs)
    if n < k:
        raise ValueError(f"cannot draw {k} samples from {n} items")
    order = np.lexsort((np.arange(n), -np.asarray(probs)))
    pos = order[:k]
    pool_size = math.ceil(pool_fraction * n)
    candidates = order[k:pool_size]
    if len(candidates) < k:
        candidates = order[k:]
    if len(candidates) < k:
        raise ValueError(f"only {len(candidates)} non-positive items for {k} negatives")
    neg = rng.choice(candidates, size=k, replace=False)
    return pos.astype(np.int64), neg.astype(np.int64)


@dataclass(frozen=True)
class SampleSets:
    """Per-session sample positions, (B, K) each.

    pos_h/neg_h weigh the hypergraph-anchored term and come from the
    line-graph channel's predictions; pos_l/neg_l weigh the line-graph
    anchored term and come from the hypergraph channel's predictions.
    """

    pos_h: np.ndarray
    neg_h: np.ndarray
    pos_l: np.ndarray
    neg_l: np.ndarray


def _draw_batch(probs: np.ndarray, k: int, rng: np.random.Generator,
                pool_fraction: float):
    """Vectorized draw_samples over probability rows; same selection rule."""
    b, n = probs.shape
    if n < k:
        raise ValueError(f"cannot draw {k} samples from {n} items")
    # Stable sort on negated probabilities breaks ties by lower index.
    order = np.argsort(-probs, axis=1, kind="stable")
    pos = order[:, :k]
    pool_size = math.ceil(pool_fraction * n)
    candidates = order[:, k:pool_size]
    if candidates.shape[1] < k:
        candidates = order[:, k:]
    if candidates.shape[1] < k:
        raise ValueError(f"only {candidates.shape[1]} non-positive items for {k} negatives")
    keys = rng.uniform(size=candidates.shape)
    pick = np.argsort(keys, axis=1)[:, :k]
    neg = np.take_along_axis(candidates, pick, axis=1)
    return pos.astype(np.int64), neg.astype(np.int64)


def draw_sample_sets(hg_probs: np.ndarray, lg_probs: np.ndarray, k: int,
                     rng: np.random.Generator, pool_fraction: float = 0.1) -> SampleSets:
    """Each channel's predictions select the samples for the other's term."""
    pos_l, neg_l = _draw_batch(np.asarray(hg_probs), k, rng, pool_fraction)
    pos_h, neg_h = _draw_batch(np.asarray(lg_probs), k, rng, pool_fraction)
    return SampleSets(pos_h, neg_h, pos_l, neg_l)


def _safe_cosine(u: torch.Tensor, v: torch.Tensor) -> torch.Tensor:
    """Cosine along the last dim with zero-norm arguments mapped to 0."""
    dot = (u * v).sum(-1)
    denom = u.norm(dim=-1) * v.norm(dim=-1)
    safe = torch.where(denom > 0, denom, torch.ones_like(denom))
    return torch.where(denom > 0, dot / safe, torch.zeros_like(dot))


def contrast_affinity(a1: torch.Tensor, a2: torch.Tensor, a3: torch.Tensor,
                      temperature: float) -> torch.Tensor:
    """exp(cos(a1 + a2, a2 + a3) / temperature)."""
    return torch.exp(_safe_cosine(a1 + a2, a2 + a3) / temperature)


def _term_losses(last: torch.Tensor, session: torch.Tensor, pos_items: torch.Tensor,
                 neg_items: torch.Tensor, temperature: float) -> torch.Tensor:
    """One InfoNCE term per session: -log(pos mass / (pos + neg mass)).

    last, session: (B, d); pos_items, neg_items: (B, K, d).
    """
    u = (last + session)[:, None, :]
    pos = torch.exp(_safe_cosine(u, session[:, None, :] + pos_items) / temperature)
    neg = torch.exp(_safe_cosine(u, session[:, None, :] + neg_items) / temperature)
    pos_mass = pos.sum(-1)
    return -torch.log(pos_mass / (pos_mass + neg.sum(-1)))


def ssl_loss(hg_last: torch.Tensor, hg_session: torch.Tensor, hg_items: torch.Tensor,
             init_last: torch.Tensor, lg_session: torch.Tensor, init_items: torch.Tensor,
             samples: SampleSets, temperature: float,
             mixed_negatives: bool = False) -> torch.Tensor:
    """Both contrastive terms, per session.

    Term 1 anchors the final hypergraph embeddings (last item plus session
    readout) against final item embeddings at the pos_h/neg_h positions.
    Term 2 anchors the layer-0 embeddings (last item plus line-graph session
    embedding) against layer-0 item embeddings at pos_l/neg_l. The
    mixed_negatives switch makes term 1's denominator draw its negatives
    from neg_l, the other channel's set, as an alternative reading.

    hg_items / init_items: (N, d) item matrices without the padding row.
    """
    neg_first = samples.neg_l if mixed_negatives else samples.neg_h
    term1 = _term_losses(hg_last, hg_session,
                         hg_items[torch.from_numpy(samples.pos_h)],
                         hg_items[torch.from_numpy(neg_first)], temperature)
    term2 = _term_losses(init_last, lg_session,
                         init_items[torch.from_numpy(samples.pos_l)],
                         init_items[torch.from_numpy(samples.neg_l)], temperature)
    return term1 + term2


def recommendation_scores(theta_h: torch.Tensor, theta_k: torch.Tensor | None,
                          items_h: torch.Tensor, items_k: torch.Tensor | None) -> torch.Tensor:
    """z_i = theta_h . x_h_i + theta_k . x_k_i, decomposed concatenation dot.

    Accepts (d,) or batched (B, d) session embeddings; the KG side may be
    None (KG-channel ablation), leaving the hypergraph term alone.
    """
    z = theta_h @ items_h.T
    if theta_k is not None:
        if items_k is None:
            raise ValueError("theta_k given without items_k")
        z = z + theta_k @ items_k.T
    return z


def rec_loss(scores: torch.Tensor, target: torch.Tensor, form: str = "binary") -> torch.Tensor:
    """Per-session recommendation loss from raw scores.

    The binary form charges every item: -[log y_t + sum_{i != t} log(1 - y_i)]
    with y = softmax(scores); the categorical form is plain cross-entropy.
    Targets are 0-based score positions. Accepts (N,) with scalar target or
    (B, N) with (B,) targets.
    """
    squeeze = scores.dim() == 1
    if squeeze:
        scores = scores[None, :]
        target = torch.as_tensor([target])
    target = torch.as_tensor(target, dtype=torch.long)
    logp = F.log_softmax(scores, dim=-1)
    picked = logp.gather(1, target[:, None]).squeeze(1)
    if form == "binary":
        p = torch.exp(logp)
        comp = torch.log1p(-p.clamp(max=1.0 - 1e-12))
        loss = -(picked + comp.sum(-1) - comp.gather(1, target[:, None]).squeeze(1))
    elif form == "categorical":
        loss = -picked
    else:
        raise ValueError(f"form must be 'binary' or 'categorical', got {form!r}")
    return loss[0] if squeeze else loss


def total_loss(rec: torch.Tensor, ssl: torch.Tensor, kg: torch.Tensor,
               contrastive_weight: float, kg_weight: float) -> torch.Tensor:
    """L = L_rec + lambda1 L_ssl + lambda2 L_KG."""
    return rec + contrastive_weight * ssl + kg_weight * kg
