"""Knowledge-graph channel: learned edge denoising, GAT encoding, TransR scoring.

Entities cover items (IDs 1..N, shared with the item vocabulary) and
attributes (N+1..E); embedding tables carry a padding row 0. Each undirected
item-attribute pair gets a single importance score and retention
probability shared by its forward and reverse directed edges.
"""

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .utils import uniform_init_

GAT_LEAKY_SLOPE = 0.2


def gumbel_probability(score, noise, temperature):
    """Retention probability sigmoid((logit(noise) + score) / temperature).

    Monotone increasing in both the importance score and the uniform draw.
    """
    if not torch.is_tensor(score):
        score = torch.tensor(score, dtype=torch.float64)
    if not torch.is_tensor(noise):
        noise = torch.tensor(noise, dtype=score.dtype)
    if not torch.all((noise > 0) & (noise < 1)):
        raise ValueError("noise draws must lie strictly inside (0, 1)")
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logit = torch.log(noise) - torch.log1p(-noise)
    return torch.sigmoid((logit + score) / temperature)


class EdgeScorer(nn.Module):
    """Two-layer perceptron scoring an item-attribute edge: 2d -> d -> 1."""

    def __init__(self, dim: int, dtype=torch.float64):
        super().__init__()
        kw = {"dtype": dtype}
        self.hidden_weight = nn.Parameter(torch.zeros(dim, 2 * dim, **kw))
        self.hidden_bias = nn.Parameter(torch.zeros(dim, **kw))
        self.out_weight = nn.Parameter(torch.zeros(1, dim, **kw))
        self.out_bias = nn.Parameter(torch.zeros(1, **kw))

    def reset_parameters(self, rng, bound: float):
        for param in self.parameters():
            uniform_init_(param, rng, bound)

    def forward(self, item_embs: torch.Tensor, attr_embs: torch.Tensor) -> torch.Tensor:
        """(P, d), (P, d) -> (P,) scores; concatenation order matters."""
        if item_embs.shape != attr_embs.shape:
            raise ValueError(f"embedding shapes differ: {tuple(item_embs.shape)} "
                             f"vs {tuple(attr_embs.shape)}")
        x = torch.cat([item_embs, attr_embs], dim=-1)
        h = F.leaky_relu(x @ self.hidden_weight.T + self.hidden_bias)
        return (h @ self.out_weight.T + self.out_bias).squeeze(-1)


def edge_importance(item_emb: torch.Tensor, attr_emb: torch.Tensor,
                    scorer: EdgeScorer) -> torch.Tensor:
    """Score one edge; see EdgeScorer."""
    return scorer(item_emb[None, :], attr_emb[None, :])[0]


def apply_mask(edge_gate: torch.Tensor, mode: str, threshold: float = 0.5):
    """Turn retention probabilities into per-edge multipliers.

    Soft mode returns the probabilities themselves (differentiable training
    path); hard mode returns a binary keep mask with p >= threshold
    (deterministic evaluation path).
    """
    if mode == "soft":
        return edge_gate
    if mode == "hard":
        return (edge_gate >= threshold).to(edge_gate.dtype)
    raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")


class GraphAttention(nn.Module):
    """Single-head GAT layer over a fixed directed edge list.

    Attention uses LeakyReLU(a . [Wx_dst || Wx_src]) normalized over each
    destination's neighborhood; in soft mode every pre-softmax term is
    additionally scaled by its edge's mask weight. Nodes without incoming
    edges fall back to sigmoid(W x) on their own embedding.
    """

    def __init__(self, dim: int, dtype=torch.float64):
        super().__init__()
        kw = {"dtype": dtype}
        self.weight = nn.Parameter(torch.zeros(dim, dim, **kw))
        self.attention = nn.Parameter(torch.zeros(2 * dim, **kw))

    def reset_parameters(self, rng, bound: float):
        for param in self.parameters():
            uniform_init_(param, rng, bound)

    def _edge_attention(self, h, n, dst, src, edge_gate):
        d = h.shape[1]
        scores = F.leaky_relu(
            h[dst] @ self.attention[:d] + h[src] @ self.attention[d:],
            negative_slope=GAT_LEAKY_SLOPE)                          # (T,)
        # Per-destination max subtraction keeps exp stable; softmax is shift
        # invariant so attention values are unchanged.
        peak = torch.full((n,), -torch.inf, dtype=scores.dtype)
        peak = peak.scatter_reduce(0, dst, scores.detach(), reduce="amax")
        weights = torch.exp(scores - peak[dst])
        if edge_gate is not None:
            weights = weights * edge_gate
        denom = torch.zeros(n, dtype=weights.dtype).index_add(0, dst, weights)
        covered = denom > 0
        alpha = weights / denom[dst]
        return alpha, covered

    def attention_weights(self, node_embs: torch.Tensor, dst: torch.Tensor,
                          src: torch.Tensor, edge_gate: torch.Tensor | None = None):
        """Per-edge attention after gating, plus the mask of destinations
        that have any incoming weight."""
        h = node_embs @ self.weight.T
        return self._edge_attention(h, node_embs.shape[0], dst, src, edge_gate)

    def forward(self, node_embs: torch.Tensor, dst: torch.Tensor, src: torch.Tensor,
                edge_gate: torch.Tensor | None = None) -> torch.Tensor:
        n = node_embs.shape[0]
        h = node_embs @ self.weight.T                                # (E+1, d)
        if len(dst) == 0:
            return torch.sigmoid(h)
        alpha, covered = self._edge_attention(h, n, dst, src, edge_gate)
        agg = torch.zeros_like(h).index_add(0, dst, alpha[:, None] * h[src])
        return torch.where(covered[:, None], torch.sigmoid(agg), torch.sigmoid(h))


def average_layers(layer_outputs) -> torch.Tensor:
    """Elementwise mean over the L+1 per-layer matrices, layer 0 included."""
    if len(layer_outputs) == 0:
        raise ValueError("no layer outputs to average")
    first = layer_outputs[0].shape
    for out in layer_outputs[1:]:
        if out.shape != first:
            raise ValueError(f"layer shape {tuple(out.shape)} differs from {tuple(first)}")
    return torch.stack(tuple(layer_outputs)).mean(dim=0)


def transr_score(head_emb: torch.Tensor, rel_emb: torch.Tensor,
                 tail_emb: torch.Tensor, projection: torch.Tensor) -> torch.Tensor:
    """Squared L2 norm of W_r e_h + e_r - W_r e_t; supports a leading batch dim."""
    if projection.dim() == 2:
        residual = head_emb @ projection.T + rel_emb - tail_emb @ projection.T
    else:
        residual = (torch.einsum("bij,bj->bi", projection, head_emb) + rel_emb
                    - torch.einsum("bij,bj->bi", projection, tail_emb))
    return (residual ** 2).sum(dim=-1)


def triple_ranking_loss(pos_score: torch.Tensor, neg_score: torch.Tensor) -> torch.Tensor:
    """-log sigmoid(g_neg - g_pos), elementwise; lower when the true triple
    scores closer (smaller) than the corrupted one."""
    return -F.logsigmoid(neg_score - pos_score)


def negative_tails(triple_rows, entity_count: int, triple_set: frozenset,
                   rng: np.random.Generator, max_retry: int = 20) -> np.ndarray:
    """Corrupt each triple's tail with a uniform entity draw.

    Draws avoiding existing triples are retried up to max_retry times, then
    the fallback draws uniformly over entities != t (which may collide with
    another true triple, but never reproduces the source one).
    """
    if entity_count < 2:
        raise ValueError("need at least 2 entities to corrupt a tail")
    out = np.empty(len(triple_rows), dtype=np.int64)
    for i, (h, r, t) in enumerate(triple_rows):
        candidate = None
        for _ in range(max_retry):
            draw = int(rng.integers(1, entity_count + 1))
            if (h, r, draw) not in triple_set:
                candidate = draw
                break
        if candidate is None:
            draw = int(rng.integers(1, entity_count))
            candidate = draw if draw < t else draw + 1
        out[i] = candidate
    return out


def negative_triple(kg, triple, rng: np.random.Generator):
    """Corrupt one triple's tail against a TripleSet; returns the new triple."""
    h, r, t = (int(x) for x in triple)
    tail = negative_tails([(h, r, t)], kg.entity_count, kg.triple_set(), rng)[0]
    return (h, r, int(tail))


class KGEncoder(nn.Module):
    """Entity embeddings, translational triple scoring, the edge denoiser,
    and the GAT stack.

    Produces per-entity embeddings averaged over layers 0..L; the item
    rows (1..N) feed the recommendation score and the KG-channel readout.
    Relation embeddings and per-relation projections serve the triple
    ranking loss only.
    """

    def __init__(self, entity_count: int, relation_count: int, dim: int,
                 layers: int, dtype=torch.float64):
        super().__init__()
        self.entity_count = entity_count
        self.dim = dim
        self.entity_embeddings = nn.Parameter(torch.zeros(entity_count + 1, dim, dtype=dtype))
        self.relation_embeddings = nn.Parameter(torch.zeros(relation_count, dim, dtype=dtype))
        self.relation_projections = nn.Parameter(torch.zeros(relation_count, dim, dim, dtype=dtype))
        self.scorer = EdgeScorer(dim, dtype=dtype)
        self.gat_layers = nn.ModuleList(GraphAttention(dim, dtype=dtype) for _ in range(layers))

    def reset_parameters(self, rng, bound: float):
        uniform_init_(self.entity_embeddings, rng, bound)
        uniform_init_(self.relation_embeddings, rng, bound)
        # Projections start near the identity so the triple score begins as
        # a plain translation.
        uniform_init_(self.relation_projections, rng, 0.1 * bound)
        with torch.no_grad():
            self.relation_projections += torch.eye(self.dim, dtype=self.relation_projections.dtype)
        self.scorer.reset_parameters(rng, bound)
        for layer in self.gat_layers:
            layer.reset_parameters(rng, bound)

    def triple_loss(self, triple_rows: np.ndarray, corrupt_tails: np.ndarray) -> torch.Tensor:
        """Mean ranking loss over a batch of (h, r, t) rows and corrupted tails."""
        h = self.entity_embeddings[torch.from_numpy(triple_rows[:, 0])]
        r = self.relation_embeddings[torch.from_numpy(triple_rows[:, 1])]
        t = self.entity_embeddings[torch.from_numpy(triple_rows[:, 2])]
        t_neg = self.entity_embeddings[torch.from_numpy(corrupt_tails)]
        proj = self.relation_projections[torch.from_numpy(triple_rows[:, 1])]
        g_pos = transr_score(h, r, t, proj)
        g_neg = transr_score(h, r, t_neg, proj)
        return triple_ranking_loss(g_pos, g_neg).mean()

    def edge_gate(self, triples, noise, temperature: float, mode: str) -> torch.Tensor:
        """Per-directed-edge multiplier in pair order; both directions of a
        pair share one score and one noise draw."""
        item_embs = self.entity_embeddings[torch.from_numpy(triples.pair_item_side)]
        attr_embs = self.entity_embeddings[torch.from_numpy(triples.pair_attr_side)]
        scores = self.scorer(item_embs, attr_embs)                   # (P,)
        probs = gumbel_probability(scores, noise, temperature)
        gate = apply_mask(probs, mode)
        return gate[torch.from_numpy(triples.pair_index)]            # (T,)

    def forward(self, triples, edge_gate: torch.Tensor | None, mode: str = "soft"):
        dst = torch.from_numpy(triples.triples[:, 0])
        src = torch.from_numpy(triples.triples[:, 2])
        if edge_gate is not None and mode == "hard":
            # Severed edges are dropped outright; survivors aggregate unscaled.
            keep = edge_gate > 0
            dst, src, edge_gate = dst[keep], src[keep], None
        outputs = [self.entity_embeddings]
        x = self.entity_embeddings
        for layer in self.gat_layers:
            x = layer(x, dst, src, edge_gate)
            outputs.append(x)
        return average_layers(outputs), outputs
