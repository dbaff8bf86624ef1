"""Per-state temporal graph and its symmetric-normalized adjacency.

Each state's records form an undirected chain along time; no edges cross
state boundaries. Graph convolution consumes Ahat = Dtilde^{-1/2} (A + I)
Dtilde^{-1/2}, stored sparse (CSR) since N reaches tens of thousands while
each node touches at most two neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DataError, RowCountMismatch
from .features import FeatureMatrix
from .ingestion import Dataset


@dataclass
class TemporalGraph:
    """Node features, undirected chain edges, labels, and split masks."""

    x: FeatureMatrix
    edges: np.ndarray                 # (E, 2) int64, each pair listed once
    y: np.ndarray                     # (N,) int64 labels
    train_mask: np.ndarray
    test_mask: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.x.n_rows

    def validate(self) -> None:
        n = self.n_nodes
        e = self.edges
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise DataError("edge endpoint out of range")
            if (e[:, 0] == e[:, 1]).any():
                raise DataError("explicit self-loops are not allowed")
            canon = np.sort(e, axis=1)
            uniq = np.unique(canon, axis=0)
            if len(uniq) != len(e):
                raise DataError("duplicate undirected edges")
        if (self.train_mask & self.test_mask).any():
            raise DataError("train and test masks overlap")


@dataclass
class NormalizedAdjacency:
    """Sparse symmetric Ahat with self-loops, ready for propagation."""

    n: int
    matrix: sp.csr_matrix = field(repr=False)

    def dot(self, h: np.ndarray) -> np.ndarray:
        return self.matrix @ h

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def build_temporal_graph(
    d: Dataset,
    x: FeatureMatrix,
    train_mask: np.ndarray | None = None,
    test_mask: np.ndarray | None = None,
) -> TemporalGraph:
    """Chain consecutive records within each state into undirected edges."""
    n = len(d)
    if x.n_rows != n:
        raise RowCountMismatch(f"{x.n_rows} feature rows for {n} records")
    if d.labels is None:
        raise DataError("graph construction needs a labeled dataset")
    edges = []
    for sl in d.state_index.values():
        idx = np.arange(sl.start, sl.stop)
        if idx.size >= 2:
            edges.append(np.column_stack([idx[:-1], idx[1:]]))
    edge_arr = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)
    g = TemporalGraph(
        x=x,
        edges=edge_arr.astype(np.int64),
        y=d.labels.astype(np.int64),
        train_mask=np.zeros(n, dtype=bool) if train_mask is None else np.asarray(train_mask, bool),
        test_mask=np.zeros(n, dtype=bool) if test_mask is None else np.asarray(test_mask, bool),
    )
    g.validate()
    return g


def normalized_adjacency(g: TemporalGraph) -> NormalizedAdjacency:
    """Ahat[i, j] = 1 / sqrt(dtilde_i * dtilde_j) over A + I, else 0."""
    g.validate()
    n = g.n_nodes
    deg = np.ones(n, dtype=np.float64)            # self-loop counts for everyone
    if g.edges.size:
        np.add.at(deg, g.edges[:, 0], 1.0)
        np.add.at(deg, g.edges[:, 1], 1.0)
    inv_sqrt = 1.0 / np.sqrt(deg)

    diag = np.arange(n, dtype=np.int64)
    if g.edges.size:
        src = np.concatenate([g.edges[:, 0], g.edges[:, 1], diag])
        dst = np.concatenate([g.edges[:, 1], g.edges[:, 0], diag])
    else:
        src = dst = diag
    vals = inv_sqrt[src] * inv_sqrt[dst]
    mat = sp.coo_matrix((vals, (src, dst)), shape=(n, n)).tocsr()
    return NormalizedAdjacency(n, mat)
