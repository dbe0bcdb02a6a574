"""Synthetic corpora with known structure for capability checks.

Three generators:
- successor_corpus: items follow a fixed successor permutation with a noise
  rate; a model that learns the rule predicts held-out continuations.
- group_corpus: the next item is any member of the next attribute group, so
  the knowledge graph reveals structure that item identity alone hides.
- scaling_corpus: sessions draw items from disjoint blocks, keeping session
  overlap (and so line-graph degree) bounded while session count grows.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import RawSession


@dataclass
class SyntheticCorpus:
    sessions: list
    triples: list
    params: dict = field(default_factory=dict)


def _walk_session(sid, start, steps, successor, noise, n_items, rng):
    """Emit a successor walk; each event is replaced by a uniform random item
    with probability noise, while the underlying walk continues unperturbed."""
    true_item = start
    events = []
    for _ in range(steps):
        if noise > 0 and rng.uniform() < noise:
            events.append(int(rng.integers(n_items)))
        else:
            events.append(int(true_item))
        true_item = successor[true_item]
    return RawSession(str(sid), tuple(f"i{e}" for e in events),
                      tuple(range(len(events))))


def successor_corpus(n_items=50, n_sessions=200, noise=0.1, n_relations=3,
                     min_len=3, max_len=6, seed=0) -> SyntheticCorpus:
    """Training corpus driven by one random successor permutation.

    Knowledge triples attach one attribute per relation to every item
    (n_items * n_relations triples); attributes group items by coprime
    moduli so no relation encodes the successor rule directly.
    """
    rng = np.random.default_rng(seed)
    successor = rng.permutation(n_items)
    sessions = [
        _walk_session(s, rng.integers(n_items), rng.integers(min_len, max_len + 1),
                      successor, noise, n_items, rng)
        for s in range(n_sessions)
    ]
    moduli = (5, 7, 11)
    triples = [(f"i{i}", f"r{r}", f"attr{r}_{i % moduli[r % len(moduli)]}")
               for r in range(n_relations) for i in range(n_items)]
    return SyntheticCorpus(sessions, triples,
                           {"successor": successor, "n_items": n_items, "noise": noise})


def successor_holdout(corpus: SyntheticCorpus, n_sessions=100, min_len=3,
                      max_len=6, seed=1) -> list:
    """Noise-free sessions from the same successor rule, for evaluation."""
    rng = np.random.default_rng(seed)
    successor = corpus.params["successor"]
    n_items = corpus.params["n_items"]
    return [
        _walk_session(f"h{s}", rng.integers(n_items),
                      rng.integers(min_len, max_len + 1), successor, 0.0,
                      n_items, rng)
        for s in range(n_sessions)
    ]


def group_corpus(n_items=200, group_size=25, n_sessions=120, min_len=3,
                 max_len=6, seed=0, anchors=2, anchor_share=0.8) -> SyntheticCorpus:
    """Sessions cycle through item groups; the group is what predicts the next
    step, the member within it does not.

    The group assignment is exposed only through the knowledge graph (one
    triple per item), plus a decoy relation uncorrelated with the dynamics.
    Within a group the draw is skewed: `anchor_share` of the mass falls on the
    first `anchors` members, so the rest appear too rarely for co-occurrence
    alone to place them. Set anchors=0 for a uniform draw.
    """
    rng = np.random.default_rng(seed)
    n_groups = n_items // group_size
    sessions = []
    for s in range(n_sessions):
        length = int(rng.integers(min_len, max_len + 1))
        group = int(rng.integers(n_groups))
        events = []
        for _ in range(length):
            if anchors > 0 and rng.uniform() < anchor_share:
                member = int(rng.integers(anchors))
            else:
                member = int(rng.integers(group_size))
            events.append(group * group_size + member)
            group = (group + 1) % n_groups
        sessions.append(RawSession(str(s), tuple(f"i{e}" for e in events),
                                   tuple(range(length))))
    triples = [(f"i{i}", "group", f"g{i // group_size}") for i in range(n_items)]
    triples += [(f"i{i}", "decoy", f"d{i % 7}") for i in range(n_items)]
    return SyntheticCorpus(sessions, triples,
                           {"n_items": n_items, "group_size": group_size,
                            "n_groups": n_groups})


def group_holdout(corpus: SyntheticCorpus, n_sessions=100, min_len=3,
                  max_len=6, seed=1) -> list:
    """Fresh sessions from the same group cycle, drawn uniformly within each
    group so infrequent members carry most of the evaluation weight."""
    shifted = group_corpus(corpus.params["n_items"], corpus.params["group_size"],
                           n_sessions, min_len, max_len, seed=seed, anchors=0)
    return [RawSession(f"h{s.session_id}", s.items, s.timestamps)
            for s in shifted.sessions]


def scaling_corpus(n_sessions, n_items=4000, block_size=4, sessions_per_block=4,
                   min_len=3, max_len=4, seed=0) -> SyntheticCorpus:
    """Sessions confined to disjoint item blocks.

    Only sessions in the same block can share items, so each line-graph node
    has a bounded neighbor count no matter how many sessions there are.
    Requires enough items to give every block its own slice.
    """
    blocks = max(n_sessions // sessions_per_block, 1)
    if blocks * block_size > n_items:
        raise ValueError(f"{n_sessions} sessions need {blocks * block_size} items, "
                         f"got {n_items}")
    if max_len > block_size:
        raise ValueError(f"max_len {max_len} exceeds block size {block_size}")
    rng = np.random.default_rng(seed)
    sessions = []
    for s in range(n_sessions):
        block = s % blocks
        length = int(rng.integers(min_len, max_len + 1))
        items = rng.choice(np.arange(block * block_size, (block + 1) * block_size),
                           size=length, replace=False)
        sessions.append(RawSession(str(s), tuple(f"i{int(i)}" for i in items),
                                   tuple(range(length))))
    return SyntheticCorpus(sessions, [], {"n_items": n_items, "blocks": blocks})


def scaling_dataset(n_sessions, n_items=4000, **kwargs):
    """SessionDataset over the FULL n_items vocabulary, whatever the corpus
    touches. Corpora of different sizes then share one item count, so model
    width stays constant while session count grows."""
    from .data import SessionDataset, Vocabulary, split_sequences

    corpus = scaling_corpus(n_sessions, n_items, **kwargs)
    vocab = Vocabulary([f"i{i}" for i in range(n_items)])
    sessions = tuple(tuple(vocab.encode(tok) for tok in s.items)
                     for s in corpus.sessions)
    sequences = tuple(pair for s in sessions for pair in split_sequences(s))
    return SessionDataset(sessions=sessions, sequences=sequences,
                          item_count=n_items, vocab=vocab)


def holdout_pairs(sessions, vocab) -> list:
    """(prefix, target) pairs in vocabulary IDs from raw holdout sessions.

    Events outside the vocabulary are dropped; sessions shorter than two
    surviving events contribute nothing.
    """
    pairs = []
    for session in sessions:
        ids = [vocab.encode(tok) for tok in session.items if tok in vocab]
        for cut in range(1, len(ids)):
            pairs.append((tuple(ids[:cut]), ids[cut]))
    return pairs
