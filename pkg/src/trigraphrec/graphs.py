"""Hypergraph, session line graph, and knowledge-graph adjacency construction.

Item rows are indexed by item ID directly, so incidence and degree arrays
have N+1 rows with row 0 (the padding slot) left empty.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .data import TripleSet


@dataclass(frozen=True)
class Hypergraph:
    """Incidence H with unit hyperedge weights and the degree diagonals.

    D[i] = sum_e W[e] * H[i, e] (node degree), B[e] = sum_i H[i, e]
    (hyperedge size). W is fixed to ones.
    """

    incidence: sp.csr_matrix         # (N+1, M) binary
    node_degree: np.ndarray          # (N+1,) D diagonal
    edge_degree: np.ndarray          # (M,) B diagonal
    edge_weight: np.ndarray          # (M,) W diagonal, all ones

    @property
    def item_count(self) -> int:
        return self.incidence.shape[0] - 1

    @property
    def session_count(self) -> int:
        return self.incidence.shape[1]

    def propagation_matrix(self) -> sp.csr_matrix:
        """The full convolution operator: D^-1 H W B^-1 H^T, with identity
        rows substituted for zero-degree nodes so their embeddings pass
        through unchanged."""
        n = self.incidence.shape[0]
        inv_d = np.zeros(n)
        nz = self.node_degree > 0
        inv_d[nz] = 1.0 / self.node_degree[nz]
        inv_b = 1.0 / self.edge_degree
        op = (sp.diags(inv_d) @ self.incidence @ sp.diags(self.edge_weight * inv_b)
              @ self.incidence.T)
        passthrough = sp.diags((~nz).astype(float))
        return (op + passthrough).tocsr()


def build_hypergraph(session_item_sets, item_count: int) -> Hypergraph:
    """One hyperedge per session item set, over items 1..item_count."""
    rows, cols = [], []
    for e, items in enumerate(session_item_sets):
        if not items:
            raise ValueError(f"session {e}: empty item set")
        for i in items:
            if not 1 <= i <= item_count:
                raise ValueError(f"session {e}: item ID {i} outside [1, {item_count}]")
            rows.append(i)
            cols.append(e)
    m = len(session_item_sets)
    data = np.ones(len(rows))
    h = sp.csr_matrix((data, (rows, cols)), shape=(item_count + 1, m))
    edge_weight = np.ones(m)
    node_degree = np.asarray(h @ edge_weight).ravel() if m else np.zeros(item_count + 1)
    edge_degree = np.asarray(h.sum(axis=0)).ravel()
    return Hypergraph(h, node_degree, edge_degree, edge_weight)


@dataclass(frozen=True)
class LineGraph:
    """Session-to-session graph weighted by item-set Jaccard similarity."""

    adjacency: sp.csr_matrix         # (M, M) symmetric, zero diagonal
    propagation: sp.csr_matrix       # row-normalized (A + I)

    @property
    def session_count(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, node: int) -> np.ndarray:
        """Propagation-row support of one session (includes the session itself)."""
        p = self.propagation
        return p.indices[p.indptr[node]:p.indptr[node + 1]]


def build_line_graph(session_item_sets) -> LineGraph:
    """Connect sessions sharing at least one item with Jaccard weights."""
    sets = [frozenset(s) for s in session_item_sets]
    for e, items in enumerate(sets):
        if not items:
            raise ValueError(f"session {e}: empty item set")
    m = len(sets)
    rows = [i for e, items in enumerate(sets) for i in items]
    cols = [e for e, items in enumerate(sets) for _ in items]
    n_rows = max(rows) + 1 if rows else 1
    membership = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_rows, m))
    shared = (membership.T @ membership).tocoo()  # entry (p, q) = |e_p ∩ e_q|
    sizes = np.array([len(s) for s in sets])
    off_diag = shared.row != shared.col
    p, q, c = shared.row[off_diag], shared.col[off_diag], shared.data[off_diag]
    weights = c / (sizes[p] + sizes[q] - c)
    adjacency = sp.csr_matrix((weights, (p, q)), shape=(m, m))
    a_hat = (adjacency + sp.eye(m, format="csr")).tocsr()
    inv_deg = 1.0 / np.asarray(a_hat.sum(axis=1)).ravel()
    propagation = (sp.diags(inv_deg) @ a_hat).tocsr()
    return LineGraph(adjacency, propagation)


def kg_adjacency(triples: TripleSet) -> list:
    """Per-entity neighbor lists: adjacency[u] = [(v, r), ...] for every
    triple (u, r, v), sorted by (v, r). Index 0 is the padding slot."""
    adjacency = [[] for _ in range(triples.entity_count + 1)]
    for h, r, t in triples.triples.tolist():
        adjacency[h].append((t, r))
    for lst in adjacency:
        lst.sort()
    return adjacency


def export_edge_list(matrix: sp.spmatrix, path):
    """Write nonzero entries as `p<TAB>q<TAB>weight` lines."""
    coo = matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        for p, q, w in zip(coo.row, coo.col, coo.data):
            fh.write(f"{p}\t{q}\t{w:.10g}\n")


def export_triples(triples: TripleSet, path):
    """Write all triples (reverses included) as `h<TAB>r<TAB>t` ID lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in triples.triples.tolist():
            fh.write(f"{h}\t{r}\t{t}\n")
