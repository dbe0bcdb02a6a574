"""The fused session recommender: three graph channels and their losses.

Training alternates two phases per epoch. Phase 1 steps the translational
triple loss over knowledge-graph batches. Phase 2 steps the recommendation
loss plus the weighted contrastive loss over session batches; every phase-2
batch redraws the edge-denoiser noise, recomputes all channel embeddings,
and rebuilds the contrastive sample sets from the current predictions.
Evaluation replaces the stochastic soft mask with the deterministic hard
mask at noise 0.5 and needs no line-graph pass.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from . import objectives
from .config import ChannelWiring, TrainConfig, apply_ablation
from .hypergraph_channel import HypergraphEncoder
from .kg_channel import KGEncoder
from .line_graph_channel import ImportanceExtractor, LineGraphEncoder
from .readout import SessionReadout
from .utils import pad_sequences


@dataclass
class SessionBatch:
    """Padded prefixes plus labels and line-graph rows for one batch."""

    prefixes: torch.Tensor   # (B, T) item IDs, 0-padded
    lengths: torch.Tensor    # (B,)
    targets: torch.Tensor    # (B,) item IDs
    node_ids: np.ndarray     # (B,) line-graph node per training pair


@dataclass
class FrozenDraws:
    """Pinned stochastic inputs so a loss can be re-evaluated exactly."""

    noise: torch.Tensor | None        # (P,) edge-noise draws, None without KG
    samples: objectives.SampleSets | None


class SessionGraphModel(nn.Module):
    """All learnable state for the three-channel recommender."""

    def __init__(self, item_count: int, config: TrainConfig,
                 wiring: ChannelWiring | None = None,
                 triples=None, max_len: int | None = None):
        super().__init__()
        if wiring is None:
            wiring = apply_ablation(config)
        if wiring.use_kg and triples is None:
            raise ValueError("knowledge triples are required unless the KG channel "
                             "is ablated (NKG)")
        self.item_count = item_count
        self.config = config
        self.wiring = wiring
        self.triples = triples if wiring.use_kg else None
        self.max_len = max_len or config.max_session_len
        if self.max_len is None:
            raise ValueError("max_len must be given when config.max_session_len is unset")
        dtype = torch.float64 if config.dtype == "float64" else torch.float32
        self.dtype_ = dtype
        d = config.embedding_dim

        self.hypergraph = HypergraphEncoder(item_count, d, config.layers, dtype=dtype)
        self.hg_readout = SessionReadout(d, self.max_len, dtype=dtype)
        self.importance = ImportanceExtractor(d, config.similarity_dim,
                                              config.iem_divisor, dtype=dtype)
        if self.triples is not None:
            self.kg = KGEncoder(self.triples.entity_count, self.triples.relation_count,
                                d, config.layers, dtype=dtype)
            self.kg_readout = SessionReadout(d, self.max_len, dtype=dtype)
        else:
            self.kg = None
            self.kg_readout = None

        self.line_graph = None
        self.line_encoder = None
        self._node_prefixes = None
        self._node_lengths = None

    # -- setup ---------------------------------------------------------------

    def reset_parameters(self, rng: np.random.Generator):
        bound = 1.0 / np.sqrt(self.config.embedding_dim)
        self.hypergraph.reset_parameters(rng, bound)
        self.hg_readout.reset_parameters(rng, bound)
        self.importance.reset_parameters(rng, bound)
        if self.kg is not None:
            self.kg.reset_parameters(rng, bound)
            self.kg_readout.reset_parameters(rng, bound)

    def attach_graphs(self, hypergraph, line_graph, sequences):
        """Bind the training graphs and the per-node prefix table.

        sequences must be the training (prefix, label) pairs in the order
        used to build both graphs: pair i is hyperedge i and line-graph
        node i.
        """
        self.hypergraph.attach_graph(hypergraph)
        self.line_encoder = LineGraphEncoder(line_graph, self.config.layers,
                                             dtype=self.dtype_)
        self.line_graph = line_graph
        prefixes, lengths = pad_sequences([p for p, _ in sequences])
        self._node_prefixes = prefixes
        self._node_lengths = lengths

    # -- channel forwards ----------------------------------------------------

    def hypergraph_embeddings(self):
        """(averaged (N+1, d), layer-0 (N+1, d)) hypergraph item embeddings."""
        avg, layers = self.hypergraph()
        return avg, layers[0]

    def kg_item_embeddings(self, noise, mode: str) -> torch.Tensor:
        """(N+1, d) KG-channel item rows after masked GAT and layer averaging."""
        gate = None
        if self.wiring.denoise:
            gate = self.kg.edge_gate(self.triples, noise, self.config.mask_temperature, mode)
        avg, _ = self.kg(self.triples, gate, mode)
        return avg[: self.item_count + 1]

    def draw_noise(self, rng: np.random.Generator) -> torch.Tensor | None:
        if self.kg is None or not self.wiring.denoise:
            return None
        draws = rng.uniform(size=self.triples.pair_count)
        return torch.from_numpy(draws).to(self.dtype_)

    def _session_theta(self, table: torch.Tensor, batch: SessionBatch,
                       readout: SessionReadout) -> torch.Tensor:
        item_embs = table[batch.prefixes]                            # (B, T, d)
        return readout(item_embs, batch.lengths, use_position=self.wiring.use_position)

    def _line_graph_theta(self, init_table: torch.Tensor, node_ids: np.ndarray) -> torch.Tensor:
        def provider(nodes):
            embs = init_table[self._node_prefixes[torch.from_numpy(nodes)]]
            lens = self._node_lengths[torch.from_numpy(nodes)]
            return self.importance(embs, lens, uniform=self.wiring.uniform_importance)
        return self.line_encoder.batch_rows(node_ids, provider)

    # -- losses ----------------------------------------------------------------

    def phase1_loss(self, triple_rows: np.ndarray, corrupt_tails: np.ndarray) -> torch.Tensor:
        if self.kg is None:
            raise RuntimeError("KG channel is disabled; no triple loss to compute")
        return self.kg.triple_loss(triple_rows, corrupt_tails)

    def phase2_losses(self, batch: SessionBatch, rng: np.random.Generator | None = None,
                      frozen: FrozenDraws | None = None):
        """(mean L_rec, mean L_ssl) for one session batch.

        Stochastic inputs (edge noise, contrastive samples) come from rng
        unless pinned through `frozen`.
        """
        x_h_avg, x_h0 = self.hypergraph_embeddings()
        items_h = x_h_avg[1:]
        theta_h = self._session_theta(x_h_avg, batch, self.hg_readout)

        theta_k = items_k = None
        if self.kg is not None:
            noise = frozen.noise if frozen is not None else self.draw_noise(rng)
            if noise is None:
                noise = 0.5
            x_k = self.kg_item_embeddings(noise, mode="soft")
            items_k = x_k[1:]
            theta_k = self._session_theta(x_k, batch, self.kg_readout)

        scores = objectives.recommendation_scores(theta_h, theta_k, items_h, items_k)
        targets0 = batch.targets - 1
        l_rec = objectives.rec_loss(scores, targets0, self.config.rec_loss_form).mean()

        theta_l = self._line_graph_theta(x_h0, batch.node_ids)
        if frozen is not None and frozen.samples is not None:
            samples = frozen.samples
        else:
            y_h = objectives.channel_predictions(items_h, theta_h)
            y_l = objectives.channel_predictions(x_h0[1:], theta_l)
            samples = objectives.draw_sample_sets(
                y_h.detach().numpy(), y_l.detach().numpy(),
                self.config.sample_count, rng, self.config.hard_pool_fraction)

        last_ids = batch.prefixes[torch.arange(len(batch.lengths)), batch.lengths - 1]
        l_ssl = objectives.ssl_loss(
            x_h_avg[last_ids], theta_h, items_h,
            x_h0[last_ids], theta_l, x_h0[1:],
            samples, self.config.ssl_temperature,
            self.config.ssl_mixed_negatives).mean()
        return l_rec, l_ssl

    # -- inference -------------------------------------------------------------

    def scores(self, prefixes) -> torch.Tensor:
        """(B, N) recommendation scores for raw prefix lists, evaluation path.

        Prefixes longer than the trained position table keep only their most
        recent max_len events.
        """
        prefixes = [list(p)[-self.max_len:] for p in prefixes]
        batch_prefixes, lengths = pad_sequences(prefixes)
        batch = SessionBatch(batch_prefixes, lengths,
                             torch.zeros(len(prefixes), dtype=torch.long),
                             np.zeros(len(prefixes), dtype=np.int64))
        x_h_avg, _ = self.hypergraph_embeddings()
        theta_h = self._session_theta(x_h_avg, batch, self.hg_readout)
        theta_k = items_k = None
        if self.kg is not None:
            x_k = self.kg_item_embeddings(0.5, mode="hard")
            items_k = x_k[1:]
            theta_k = self._session_theta(x_k, batch, self.kg_readout)
        return objectives.recommendation_scores(theta_h, theta_k, x_h_avg[1:], items_k)

    def shape_manifest(self) -> dict:
        return {name: list(p.shape) for name, p in self.named_parameters()}
