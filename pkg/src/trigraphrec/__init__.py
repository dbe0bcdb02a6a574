"""Session-based recommendation over three fused graph views.

Sessions are modeled jointly through an item hypergraph, a session line
graph with attention-based session initialization, and an attribute
knowledge graph cleaned by a learned edge mask. Cross-view contrastive
learning ties the channels together during training.
"""

from .config import TrainConfig, apply_ablation, load_config
from .data import (RawSession, SessionDataset, TripleSet, Vocabulary,
                   preprocess_corpus)
from .estimator import SessionRecommender
from .graphs import build_hypergraph, build_line_graph
from .model import SessionGraphModel
from .trainer import Trainer, build_trainer, evaluate_ranking

__version__ = "0.1.0"

__all__ = [
    "TrainConfig", "apply_ablation", "load_config",
    "RawSession", "SessionDataset", "TripleSet", "Vocabulary",
    "preprocess_corpus",
    "SessionRecommender",
    "build_hypergraph", "build_line_graph",
    "SessionGraphModel",
    "Trainer", "build_trainer", "evaluate_ranking",
    "__version__",
]
