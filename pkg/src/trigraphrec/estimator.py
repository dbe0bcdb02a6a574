"""Estimator-style wrapper: fit on raw sessions, predict ranked items.

The wrapper keeps the scikit-learn contract (constructor stores
hyperparameters untouched, fit builds fitted attributes with trailing
underscores, get_params/set_params enable grid tools) around the graph
recommender. Sessions come in as sequences of item tokens; targets are
implicit, every next item within a session is a training example.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .config import TrainConfig
from .data import RawSession, build_vocab, load_triples
from .trainer import Trainer, build_trainer, evaluate_ranking


def _as_raw_sessions(sessions):
    out = []
    for idx, seq in enumerate(sessions):
        items = tuple(str(tok) for tok in seq)
        out.append(RawSession(str(idx), items, tuple(range(len(items)))))
    return out


class SessionRecommender(BaseEstimator):
    """Next-item recommender over item-token sessions.

    Parameters mirror TrainConfig. `ablation` accepts a tuple or a
    space/comma separated string of flags (NP, NKG, NDKG, NIEM).
    """

    def __init__(self, embedding_dim=112, layers=1, batch_size=100,
                 learning_rate=0.001, epochs=30, sample_count=5,
                 contrastive_weight=0.001, kg_weight=0.1, ssl_temperature=0.2,
                 mask_temperature=1.0, hard_pool_fraction=0.1,
                 similarity_dim=None, seed=0, patience=5, ablation=(),
                 iem_divisor="t", ssl_mixed_negatives=False,
                 rec_loss_form="binary", dtype="float64"):
        self.embedding_dim = embedding_dim
        self.layers = layers
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.sample_count = sample_count
        self.contrastive_weight = contrastive_weight
        self.kg_weight = kg_weight
        self.ssl_temperature = ssl_temperature
        self.mask_temperature = mask_temperature
        self.hard_pool_fraction = hard_pool_fraction
        self.similarity_dim = similarity_dim
        self.seed = seed
        self.patience = patience
        self.ablation = ablation
        self.iem_divisor = iem_divisor
        self.ssl_mixed_negatives = ssl_mixed_negatives
        self.rec_loss_form = rec_loss_form
        self.dtype = dtype

    def _config(self) -> TrainConfig:
        return TrainConfig(
            embedding_dim=self.embedding_dim, layers=self.layers,
            batch_size=self.batch_size, learning_rate=self.learning_rate,
            epochs=self.epochs, sample_count=self.sample_count,
            contrastive_weight=self.contrastive_weight, kg_weight=self.kg_weight,
            ssl_temperature=self.ssl_temperature,
            mask_temperature=self.mask_temperature,
            hard_pool_fraction=self.hard_pool_fraction,
            similarity_dim=self.similarity_dim, seed=self.seed,
            patience=self.patience, ablation=self.ablation,
            iem_divisor=self.iem_divisor,
            ssl_mixed_negatives=self.ssl_mixed_negatives,
            rec_loss_form=self.rec_loss_form, dtype=self.dtype)

    # -- fitting -----------------------------------------------------------

    def fit(self, X, y=None, triples=None, valid_pairs=None, metrics_path=None):
        """X: iterable of item-token sequences (each length >= 2).

        triples: optional (head_token, relation, tail_token) facts; heads
        must be items. valid_pairs: (prefix_tokens, target_token) pairs for
        early stopping; without them training runs the full epoch budget.
        """
        raw = _as_raw_sessions(X)
        for session in raw:
            if len(session) < 2:
                raise ValueError(f"session {session.session_id} has fewer than 2 events")
        self.vocab_, dataset = build_vocab(raw)
        self.dataset_ = dataset
        triple_set = load_triples([(str(h), str(r), str(t)) for h, r, t in triples],
                                  self.vocab_) if triples is not None else None
        config = self._config()
        self.trainer_ = build_trainer(dataset, config, triple_set)
        self.model_ = self.trainer_.model
        encoded_valid = self._encode_pairs(valid_pairs) if valid_pairs else None
        self.history_ = self.trainer_.fit(valid_pairs=encoded_valid,
                                          metrics_path=metrics_path)
        self.item_count_ = dataset.item_count
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("this SessionRecommender is not fitted yet")

    def _encode_prefix(self, prefix):
        ids = [self.vocab_.encode(str(t)) for t in prefix if str(t) in self.vocab_]
        if not ids:
            raise ValueError(f"no known items in prefix {list(prefix)!r}")
        return ids

    def _encode_pairs(self, pairs):
        encoded = []
        for prefix, target in pairs:
            if str(target) not in self.vocab_:
                continue
            try:
                ids = self._encode_prefix(prefix)
            except ValueError:
                continue
            encoded.append((tuple(ids), self.vocab_.encode(str(target))))
        return encoded

    # -- inference -----------------------------------------------------------

    def predict_scores(self, X) -> np.ndarray:
        """(B, n_items) score matrix; column j scores item ID j+1."""
        self._check_fitted()
        prefixes = [self._encode_prefix(p) for p in X]
        import torch
        with torch.no_grad():
            return self.model_.scores(prefixes).numpy()

    def predict(self, X, k: int = 20):
        """Top-k item tokens per prefix, best first."""
        self._check_fitted()
        scores = self.predict_scores(X)
        order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
        return [[self.vocab_.decode(j + 1) for j in row] for row in order]

    def transform(self, X) -> np.ndarray:
        """Fused session embeddings (hypergraph, plus KG when active)."""
        self._check_fitted()
        import torch
        from .utils import pad_sequences
        prefixes = [self._encode_prefix(p) for p in X]
        prefixes = [p[-self.model_.max_len:] for p in prefixes]
        padded, lengths = pad_sequences(prefixes)
        with torch.no_grad():
            x_h_avg, _ = self.model_.hypergraph_embeddings()
            theta_h = self.model_.hg_readout(x_h_avg[padded], lengths,
                                             use_position=self.model_.wiring.use_position)
            parts = [theta_h]
            if self.model_.kg is not None:
                x_k = self.model_.kg_item_embeddings(0.5, mode="hard")
                parts.append(self.model_.kg_readout(x_k[padded], lengths,
                                                    use_position=self.model_.wiring.use_position))
        return torch.cat(parts, dim=1).numpy()

    def score(self, X, y, k: int = 20) -> float:
        """Precision@k of targets y given prefixes X (unknown targets count
        as misses)."""
        self._check_fitted()
        pairs = list(zip(X, y))
        encoded = self._encode_pairs(pairs)
        if not encoded:
            raise ValueError("no scorable pairs: all targets unknown")
        report = evaluate_ranking(self.model_, encoded, ks=(k,))
        hit_fraction = report[f"P@{k}"] * len(encoded) / len(pairs)
        return hit_fraction
