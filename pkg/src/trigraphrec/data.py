"""Session log and knowledge triple ingestion: filtering, splitting, vocabularies.

All functions here are pure; they never mutate their inputs. Item IDs are
contiguous from 1 and 0 is reserved for padding in batched prefixes.
"""

import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

BUNDLE_VERSION = 1


class CorpusExhaustedError(ValueError):
    """Raised when filtering removes every session."""


@dataclass(frozen=True)
class RawSession:
    session_id: str
    items: tuple[str, ...]
    timestamps: tuple[int, ...]

    def __post_init__(self):
        if len(self.items) != len(self.timestamps):
            raise ValueError(f"session {self.session_id}: {len(self.items)} items "
                             f"vs {len(self.timestamps)} timestamps")
        if len(self.items) == 0:
            raise ValueError(f"session {self.session_id}: empty event list")
        if any(b < a for a, b in zip(self.timestamps, self.timestamps[1:])):
            raise ValueError(f"session {self.session_id}: timestamps not sorted")

    def __len__(self):
        return len(self.items)


class Vocabulary:
    """Bijection between item tokens and contiguous IDs starting at 1."""

    def __init__(self, tokens):
        self.id_to_token = [None] + list(tokens)  # index 0 is the padding slot
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token) if t is not None}
        if len(self.token_to_id) != len(self.id_to_token) - 1:
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token) - 1

    def __contains__(self, token):
        return token in self.token_to_id

    def encode(self, token) -> int:
        return self.token_to_id[token]

    def decode(self, item_id) -> str:
        if not 1 <= item_id < len(self.id_to_token):
            raise KeyError(f"item ID {item_id} outside [1, {len(self)}]")
        return self.id_to_token[item_id]

    @property
    def tokens(self):
        return self.id_to_token[1:]


@dataclass(frozen=True)
class SessionDataset:
    """ID-space sessions plus their split (prefix, label) training pairs."""

    sessions: tuple          # tuple of item-ID tuples, one per session
    sequences: tuple         # tuple of (prefix tuple, label) pairs from sequence splitting
    item_count: int
    vocab: Vocabulary

    def __post_init__(self):
        for prefix, label in self.sequences:
            if len(prefix) == 0:
                raise ValueError("empty prefix in dataset")
            if not all(1 <= i <= self.item_count for i in prefix) or not 1 <= label <= self.item_count:
                raise ValueError(f"item ID outside [1, {self.item_count}] in sequence")

    @property
    def max_prefix_len(self) -> int:
        return max((len(p) for p, _ in self.sequences), default=0)

    def prefix_item_sets(self):
        """One item set per training pair, in pair order (hyperedge / line-graph node order)."""
        return [frozenset(prefix) for prefix, _ in self.sequences]


def read_session_file(path) -> list[RawSession]:
    """Parse `session_id<TAB>item_token<TAB>timestamp` lines into sessions.

    Events are grouped by session ID and stably sorted by timestamp, so
    equal-timestamp events keep file order. Sessions are returned in order
    of first appearance.
    """
    events = {}
    order = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            sid, token, ts = parts
            if not token:
                raise ValueError(f"{path}:{lineno}: empty item token")
            if sid not in events:
                events[sid] = []
                order.append(sid)
            events[sid].append((int(ts), token))
    sessions = []
    for sid in order:
        evs = sorted(events[sid], key=lambda e: e[0])
        sessions.append(RawSession(sid, tuple(t for _, t in evs), tuple(ts for ts, _ in evs)))
    return sessions


def read_triple_file(path) -> list[tuple[str, str, str]]:
    """Parse `head<TAB>relation<TAB>tail` lines."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3 or not all(parts):
                raise ValueError(f"{path}:{lineno}: expected 3 non-empty tab-separated fields")
            triples.append(tuple(parts))
    return triples


def filter_corpus(sessions, min_item_freq: int = 5, min_session_len: int = 2) -> list[RawSession]:
    """Drop rare items and short sessions, iterating until a fixed point.

    Removing an item can shorten a session below the length floor, and
    dropping that session can push another item below the frequency floor,
    so both rules are reapplied until nothing changes.
    """
    if min_item_freq < 1:
        raise ValueError(f"min_item_freq must be >= 1, got {min_item_freq}")
    if min_session_len < 2:
        raise ValueError(f"min_session_len must be >= 2, got {min_session_len}")

    current = list(sessions)
    last_rule = "min_session_len"
    while True:
        counts = Counter(tok for s in current for tok in s.items)
        keep_items = {tok for tok, c in counts.items() if c >= min_item_freq}
        changed = False

        trimmed = []
        for s in current:
            kept = [(tok, ts) for tok, ts in zip(s.items, s.timestamps) if tok in keep_items]
            if len(kept) < len(s):
                changed = True
                last_rule = f"min_item_freq={min_item_freq}"
            if len(kept) >= min_session_len:
                if len(kept) < len(s):
                    trimmed.append(RawSession(s.session_id,
                                              tuple(t for t, _ in kept),
                                              tuple(ts for _, ts in kept)))
                else:
                    trimmed.append(s)
            else:
                changed = True
                if len(kept) == len(s):
                    last_rule = f"min_session_len={min_session_len}"
        current = trimmed
        if not current:
            raise CorpusExhaustedError(f"corpus exhausted by filtering (last applied rule: {last_rule})")
        if not changed:
            return current


def split_sequences(session) -> list[tuple[list, object]]:
    """Expand one session of length m into its m-1 (prefix, label) pairs."""
    if len(session) < 2:
        raise ValueError(f"session of length {len(session)} cannot be split (need >= 2)")
    return [(list(session[:t]), session[t]) for t in range(1, len(session))]


def build_vocab(corpus) -> tuple[Vocabulary, SessionDataset]:
    """Assign IDs by first occurrence and return the remapped, split dataset."""
    if not corpus:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    tokens = []
    seen = set()
    for s in corpus:
        for tok in s.items:
            if tok not in seen:
                seen.add(tok)
                tokens.append(tok)
    vocab = Vocabulary(tokens)
    sessions = tuple(tuple(vocab.encode(tok) for tok in s.items) for s in corpus)
    sequences = tuple((tuple(p), l) for sess in sessions for p, l in split_sequences(sess))
    return vocab, SessionDataset(sessions, sequences, len(vocab), vocab)


def encode_with_vocab(corpus, vocab: Vocabulary, min_session_len: int = 2):
    """Remap sessions through an existing vocabulary, dropping unknown items.

    Sessions that fall below min_session_len after the drop are removed.
    Returns (dataset, dropped_event_count).
    """
    sessions = []
    dropped = 0
    for s in corpus:
        ids = []
        for tok in s.items:
            if tok in vocab:
                ids.append(vocab.encode(tok))
            else:
                dropped += 1
        if len(ids) >= min_session_len:
            sessions.append(tuple(ids))
    sessions = tuple(sessions)
    sequences = tuple((tuple(p), l) for sess in sessions for p, l in split_sequences(sess))
    return SessionDataset(sessions, sequences, len(vocab), vocab), dropped


def split_by_time(sessions, boundary: int):
    """Partition sessions into (train, test) by last-event timestamp.

    Sessions whose final event is strictly after the boundary go to test.
    """
    train = [s for s in sessions if s.timestamps[-1] <= boundary]
    test = [s for s in sessions if s.timestamps[-1] > boundary]
    return train, test


# ---------------------------------------------------------------------------
# Knowledge triples


@dataclass(frozen=True)
class TripleSet:
    """Deduplicated triples in ID space, with reverse relations materialized.

    Entity IDs: items keep their vocabulary IDs (1..N); attributes follow
    at N+1..E. ID 0 is the shared padding slot. Relation IDs: forward
    relations come first in order of appearance, then their reverses, so
    reverse of relation r is r + forward_relation_count.
    """

    item_count: int
    attribute_tokens: tuple          # attribute i has entity ID item_count + 1 + i
    relation_tokens: tuple           # forward tokens then generated reverse tokens
    forward_relation_count: int
    triples: np.ndarray              # (T, 3) int64, forward and reverse interleaved blocks
    pair_index: np.ndarray           # (T,) undirected pair ID shared by a triple and its reverse
    pair_item_side: np.ndarray       # (P,) scorer-input entity per pair, the item end when one exists
    pair_attr_side: np.ndarray       # (P,)
    dropped_triples: int

    @property
    def entity_count(self) -> int:
        return self.item_count + len(self.attribute_tokens)

    @property
    def relation_count(self) -> int:
        return len(self.relation_tokens)

    @property
    def pair_count(self) -> int:
        return len(self.pair_item_side)

    def triple_set(self) -> frozenset:
        return frozenset(map(tuple, self.triples.tolist()))


def load_triples(triples, vocab: Vocabulary) -> TripleSet:
    """Remap token triples into a TripleSet, adding one reverse per forward triple.

    Head tokens must be vocabulary items or appear elsewhere as a tail;
    anything else counts as an unknown item head (for example an item
    removed by corpus filtering) and the triple is dropped and counted.
    """
    tail_tokens = {t for _, _, t in triples}
    seen = set()
    forward = []
    dropped = 0
    for h, r, t in triples:
        if (h, r, t) in seen:
            continue
        seen.add((h, r, t))
        if h not in vocab and h not in tail_tokens:
            dropped += 1
            continue
        forward.append((h, r, t))

    attr_ids = {}
    relation_ids = {}
    attribute_tokens = []
    relation_tokens = []

    def entity_id(token):
        if token in vocab:
            return vocab.encode(token)
        if token not in attr_ids:
            attr_ids[token] = len(vocab) + 1 + len(attribute_tokens)
            attribute_tokens.append(token)
        return attr_ids[token]

    def relation_id(token):
        if token not in relation_ids:
            relation_ids[token] = len(relation_tokens)
            relation_tokens.append(token)
        return relation_ids[token]

    fwd = [(entity_id(h), relation_id(r), entity_id(t)) for h, r, t in forward]
    n_rel = len(relation_tokens)
    n_items = len(vocab)
    rev = [(t, r + n_rel, h) for h, r, t in fwd]
    all_triples = np.array(fwd + rev, dtype=np.int64).reshape(-1, 3)
    pair_index = np.concatenate([np.arange(len(fwd)), np.arange(len(fwd))]).astype(np.int64)

    item_side = np.zeros(len(fwd), dtype=np.int64)
    attr_side = np.zeros(len(fwd), dtype=np.int64)
    for i, (h, _, t) in enumerate(fwd):
        if h <= n_items or t > n_items:
            item_side[i], attr_side[i] = h, t
        else:
            item_side[i], attr_side[i] = t, h

    return TripleSet(
        item_count=n_items,
        attribute_tokens=tuple(attribute_tokens),
        relation_tokens=tuple(relation_tokens + [f"{r}_inv" for r in relation_tokens]),
        forward_relation_count=n_rel,
        triples=all_triples,
        pair_index=pair_index,
        pair_item_side=item_side,
        pair_attr_side=attr_side,
        dropped_triples=dropped,
    )


# ---------------------------------------------------------------------------
# Dataset-specific preprocessing recipes (applied before the generic filters)


def recipe_tmall(sessions, session_cap: int = 120_000):
    """Keep only the first session_cap sessions in input order."""
    return list(sessions)[:session_cap]


def recipe_retailrocket(sessions, short_cap: int = 10_000,
                        short_range: tuple[int, int] = (2, 4)):
    """Balance short sessions: keep the first short_cap sessions whose length
    falls in short_range plus every longer session."""
    lo, hi = short_range
    kept = []
    short_taken = 0
    for s in sessions:
        if len(s) > hi:
            kept.append(s)
        elif lo <= len(s) <= hi and short_taken < short_cap:
            kept.append(s)
            short_taken += 1
    return kept


def recipe_kkbox(sessions, min_listen_seconds: int = 60, max_order_gap: int = 3):
    """Keep events listened to for at least min_listen_seconds, then drop
    sessions where consecutive surviving events sit more than max_order_gap
    positions apart in the original order.

    Listen time for an event is the gap to the next event in the session;
    the final event has no successor and is always kept. The order-gap rule
    is applied per adjacent surviving pair.
    """
    kept_sessions = []
    for s in sessions:
        kept = [i for i in range(len(s) - 1)
                if s.timestamps[i + 1] - s.timestamps[i] >= min_listen_seconds]
        kept.append(len(s) - 1)
        if any(b - a > max_order_gap for a, b in zip(kept, kept[1:])):
            continue
        if len(kept) == len(s):
            kept_sessions.append(s)
        else:
            kept_sessions.append(RawSession(s.session_id,
                                            tuple(s.items[i] for i in kept),
                                            tuple(s.timestamps[i] for i in kept)))
    return kept_sessions


RECIPES = {
    "tmall": recipe_tmall,
    "retailrocket": recipe_retailrocket,
    "kkbox": recipe_kkbox,
}


def apply_recipe(sessions, name: str):
    if name not in RECIPES:
        raise ValueError(f"unknown recipe {name!r}, expected one of {sorted(RECIPES)}")
    return RECIPES[name](sessions)


# ---------------------------------------------------------------------------
# Processed bundle serialization


def preprocess_corpus(sessions, triples=None, *, min_item_freq: int = 5,
                      min_session_len: int = 2, test_boundary: int | None = None,
                      recipe: str | None = None) -> dict:
    """Run recipe, filtering, time split, vocabulary, and triple remapping.

    Returns a JSON-serializable bundle dict (see save_bundle).
    """
    if recipe:
        sessions = apply_recipe(sessions, recipe)
    sessions = filter_corpus(sessions, min_item_freq, min_session_len)
    if test_boundary is not None:
        train_raw, test_raw = split_by_time(sessions, test_boundary)
    else:
        train_raw, test_raw = sessions, []
    if not train_raw:
        raise CorpusExhaustedError("no training sessions on or before the test boundary")
    vocab, train = build_vocab(train_raw)
    if test_raw:
        test, dropped_events = encode_with_vocab(test_raw, vocab, min_session_len)
    else:
        test, dropped_events = encode_with_vocab([], vocab, min_session_len)
    triple_set = load_triples(triples, vocab) if triples is not None else None

    bundle = {
        "version": BUNDLE_VERSION,
        "item_count": len(vocab),
        "item_tokens": list(vocab.tokens),
        "train_sessions": [list(s) for s in train.sessions],
        "test_sessions": [list(s) for s in test.sessions],
        "stats": {
            "train_sessions": len(train.sessions),
            "train_sequences": len(train.sequences),
            "test_sessions": len(test.sessions),
            "test_sequences": len(test.sequences),
            "dropped_test_events": dropped_events,
        },
    }
    if triple_set is not None:
        fwd = triple_set.triples[: len(triple_set.triples) // 2]
        bundle["kg"] = {
            "attribute_tokens": list(triple_set.attribute_tokens),
            "relation_tokens": list(triple_set.relation_tokens[: triple_set.forward_relation_count]),
            "forward_triples": fwd.tolist(),
            "dropped_triples": triple_set.dropped_triples,
        }
    return bundle


def save_bundle(bundle: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(bundle, fh)


def load_bundle(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        bundle = json.load(fh)
    if bundle.get("version") != BUNDLE_VERSION:
        raise ValueError(f"bundle version {bundle.get('version')!r} not supported "
                         f"(expected {BUNDLE_VERSION})")
    return bundle


def dataset_from_bundle(bundle: dict, split: str = "train") -> SessionDataset:
    vocab = Vocabulary(bundle["item_tokens"])
    sessions = tuple(tuple(s) for s in bundle[f"{split}_sessions"])
    sequences = tuple((tuple(p), l) for sess in sessions for p, l in split_sequences(sess))
    return SessionDataset(sessions, sequences, bundle["item_count"], vocab)


def triples_from_bundle(bundle: dict) -> TripleSet | None:
    """Rebuild the TripleSet from a bundle's forward triples."""
    if "kg" not in bundle:
        return None
    kg = bundle["kg"]
    n_items = bundle["item_count"]
    n_rel = len(kg["relation_tokens"])
    fwd = np.asarray(kg["forward_triples"], dtype=np.int64).reshape(-1, 3)
    rev = fwd[:, [2, 1, 0]].copy()
    rev[:, 1] += n_rel
    triples = np.concatenate([fwd, rev], axis=0)
    pair_index = np.concatenate([np.arange(len(fwd)), np.arange(len(fwd))]).astype(np.int64)
    item_side = np.where(
        (fwd[:, 0] <= n_items) | (fwd[:, 2] > n_items), fwd[:, 0], fwd[:, 2])
    attr_side = np.where(
        (fwd[:, 0] <= n_items) | (fwd[:, 2] > n_items), fwd[:, 2], fwd[:, 0])
    return TripleSet(
        item_count=n_items,
        attribute_tokens=tuple(kg["attribute_tokens"]),
        relation_tokens=tuple(list(kg["relation_tokens"])
                              + [f"{r}_inv" for r in kg["relation_tokens"]]),
        forward_relation_count=n_rel,
        triples=triples,
        pair_index=pair_index,
        pair_item_side=item_side.astype(np.int64),
        pair_attr_side=attr_side.astype(np.int64),
        dropped_triples=int(kg.get("dropped_triples", 0)),
    )
