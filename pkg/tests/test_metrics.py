import numpy as np
import pytest

from trigraphrec.metrics import (mrr_at_k, precision_at_k, rank_target,
                                 rank_targets, ranking_report)


def rank_oracle(scores, target_index):
    """Rank via an explicit descending sort; ties resolved pessimistically
    by taking the last position holding the target's value."""
    ordered = sorted(scores, reverse=True)
    value = scores[target_index]
    last = max(i for i, v in enumerate(ordered) if v == value)
    return last + 1


def test_rank_target_examples():
    assert rank_target([0.1, 0.9, 0.5], 1) == 1
    assert rank_target([0.1, 0.9, 0.5], 2) == 2
    assert rank_target([0.1, 0.9, 0.5], 0) == 3
    # A tie with one other item pushes the target behind it.
    assert rank_target([0.5, 0.5, 0.1], 0) == 2
    assert rank_target([0.5, 0.5, 0.5], 1) == 3


def test_rank_target_bounds():
    with pytest.raises(IndexError):
        rank_target([0.1, 0.2], 2)
    with pytest.raises(IndexError):
        rank_target([0.1, 0.2], -1)


def test_rank_matches_sort_oracle():
    rng = np.random.default_rng(12)
    for trial in range(300):
        n = int(rng.integers(2, 30))
        # Quantized scores force frequent ties.
        scores = np.round(rng.uniform(size=n), 1)
        target = int(rng.integers(n))
        assert rank_target(scores, target) == rank_oracle(list(scores), target)


def test_rank_targets_matches_single():
    rng = np.random.default_rng(13)
    scores = np.round(rng.uniform(size=(40, 15)), 1)
    targets = rng.integers(15, size=40)
    ranks = rank_targets(scores, targets)
    assert ranks.dtype == np.int64
    for b in range(40):
        assert ranks[b] == rank_target(scores[b], int(targets[b]))


def test_precision_and_mrr_values():
    ranks = [1, 2, 5, 11]
    assert precision_at_k(ranks, 10) == 0.75
    assert precision_at_k(ranks, 1) == 0.25
    assert abs(mrr_at_k(ranks, 10) - (1.0 + 0.5 + 0.2 + 0.0) / 4) < 1e-12
    assert abs(mrr_at_k(ranks, 20) - (1.0 + 0.5 + 0.2 + 1 / 11) / 4) < 1e-12


def test_metrics_monotone_in_k():
    rng = np.random.default_rng(14)
    ranks = rng.integers(1, 50, size=200)
    prev_p, prev_m = 0.0, 0.0
    for k in range(1, 60):
        p, m = precision_at_k(ranks, k), mrr_at_k(ranks, k)
        assert p >= prev_p and m >= prev_m
        prev_p, prev_m = p, m
    assert prev_p == 1.0


def test_metric_errors():
    with pytest.raises(ValueError, match="empty"):
        precision_at_k([], 10)
    with pytest.raises(ValueError, match="empty"):
        mrr_at_k([], 10)
    with pytest.raises(ValueError, match="k must be"):
        precision_at_k([1], 0)
    with pytest.raises(ValueError, match="k must be"):
        mrr_at_k([1], 0)


def test_ranking_report_keys():
    report = ranking_report([1, 3, 25], ks=(10, 20))
    assert set(report) == {"cases", "P@10", "MRR@10", "P@20", "MRR@20"}
    assert report["cases"] == 3
    assert abs(report["P@20"] - 2 / 3) < 1e-12
    assert abs(report["MRR@10"] - (1.0 + 1 / 3) / 3) < 1e-12
