"""Ranking metrics: pessimistic target rank, precision@K, MRR@K.

Precision@K on single-target next-item data is the hit rate: the fraction
of test cases whose target lands in the top K.
"""

import numpy as np


def rank_target(scores, target_index: int) -> int:
    """1-based rank of the target; tied items count as ranked ahead of it.

    target_index is the 0-based position of the target in the score vector.
    """
    scores = np.asarray(scores)
    if not 0 <= target_index < len(scores):
        raise IndexError(f"target {target_index} outside score vector of length {len(scores)}")
    s = scores[target_index]
    return int((scores > s).sum() + (scores == s).sum())


def rank_targets(score_matrix: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Vectorized rank_target over (B, N) scores and (B,) 0-based targets."""
    picked = score_matrix[np.arange(len(targets)), targets][:, None]
    return ((score_matrix > picked).sum(axis=1)
            + (score_matrix == picked).sum(axis=1)).astype(np.int64)


def precision_at_k(ranks, k: int) -> float:
    """Fraction of test cases ranked within the top k."""
    ranks = np.asarray(ranks)
    if len(ranks) == 0:
        raise ValueError("empty test set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    return float((ranks <= k).mean())


def mrr_at_k(ranks, k: int) -> float:
    """Mean reciprocal rank, zeroed beyond rank k."""
    ranks = np.asarray(ranks)
    if len(ranks) == 0:
        raise ValueError("empty test set")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rr = np.where(ranks <= k, 1.0 / ranks, 0.0)
    return float(rr.mean())


def ranking_report(ranks, ks=(10, 20)) -> dict:
    """P@K and MRR@K for each cutoff, plus the case count."""
    report = {"cases": int(len(np.asarray(ranks)))}
    for k in ks:
        report[f"P@{k}"] = precision_at_k(ranks, k)
        report[f"MRR@{k}"] = mrr_at_k(ranks, k)
    return report
