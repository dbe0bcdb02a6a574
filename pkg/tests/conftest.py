"""Shared builders for small deterministic fixtures."""

import numpy as np
import pytest

from trigraphrec.data import RawSession, build_vocab, load_triples


def make_sessions(token_lists, spread_timestamps=False):
    """RawSessions from token lists; timestamps optionally offset per session
    so time-based splitting has something to separate."""
    sessions = []
    for i, toks in enumerate(token_lists):
        base = i * 10 if spread_timestamps else 0
        sessions.append(RawSession(str(i), tuple(toks),
                                   tuple(base + j for j in range(len(toks)))))
    return sessions


TOY_SESSIONS = [
    ["a", "b", "c"],
    ["b", "c", "d"],
    ["a", "c", "d", "e"],
    ["e", "a", "b"],
]

TOY_TRIPLES = [
    ("a", "kind", "k0"),
    ("b", "kind", "k0"),
    ("c", "kind", "k1"),
    ("d", "kind", "k1"),
    ("e", "kind", "k0"),
    ("a", "brand", "m0"),
]


@pytest.fixture
def toy_data():
    """Vocabulary, dataset, and triples for a 5-item corpus."""
    vocab, dataset = build_vocab(make_sessions(TOY_SESSIONS))
    triples = load_triples(TOY_TRIPLES, vocab)
    return vocab, dataset, triples


def random_item_sets(rng, max_sessions, universe, min_size=1, max_size=None):
    """Random nonempty item-ID sets over 1..universe."""
    m = int(rng.integers(1, max_sessions + 1))
    max_size = max_size or universe
    sets = []
    for _ in range(m):
        size = int(rng.integers(min_size, min(max_size, universe) + 1))
        items = rng.choice(np.arange(1, universe + 1), size=size, replace=False)
        sets.append(frozenset(int(i) for i in items))
    return sets
