"""Random forest over the standardized tabular features.

Built from scratch so split selection is fully pinned down: Gini impurity,
candidate thresholds at midpoints between consecutive distinct sorted values,
ties broken by lowest feature index then lowest threshold. The split score is
computed as sum(count^2)/n per child, which is exact integer arithmetic plus
one correctly-rounded division, so an independent re-implementation lands on
bit-identical trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyData,
    NameMismatch,
    SingleClassData,
    UntrainedForest,
)
from .features import FeatureMatrix


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_features: int | str = "sqrt"     # "sqrt", "all", or an explicit count
    min_samples_leaf: int = 1
    bootstrap: bool = True
    seed: int = 0


@dataclass
class DecisionTree:
    """Flat array-of-nodes binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray          # (n_nodes,) int32
    threshold: np.ndarray        # (n_nodes,) float64
    left: np.ndarray             # (n_nodes,) int32
    right: np.ndarray            # (n_nodes,) int32
    counts: np.ndarray           # (n_nodes, 2) int64 class counts

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        """Theft-class fraction of the leaf each row lands in."""
        node = np.zeros(len(x), dtype=np.int32)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = x[rows, self.feature[nd]] <= self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        leaf_counts = self.counts[node]
        return leaf_counts[:, 1] / leaf_counts.sum(axis=1)


@dataclass
class Forest:
    trees: list[DecisionTree]
    feature_names: list[str]
    seed: int
    config: ForestConfig
    importances: Optional[np.ndarray] = None
    oob: bool = False

    @property
    def n_trees(self) -> int:
        return len(self.trees)


def _resolve_max_features(spec, n_features: int) -> int:
    if spec == "sqrt":
        return int(np.ceil(np.sqrt(n_features)))
    if spec == "all":
        return n_features
    mf = int(spec)
    if not 1 <= mf <= n_features:
        raise EmptyData(f"max_features {mf} outside [1, {n_features}]")
    return mf


def _best_split(x: np.ndarray, y: np.ndarray, feature_ids: np.ndarray, min_leaf: int):
    """Best (score, feature, threshold) over the candidate features.

    Score of a split is sum over children of (c0^2 + c1^2) / n_child; since
    n_left + n_right is fixed, maximizing it minimizes weighted Gini. Returns
    None when no feature admits a valid cut.
    """
    n = len(y)
    best_score = -np.inf
    best = None
    for f in np.sort(feature_ids):
        col = x[:, f]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ys = y[order]
        cut_ok = xs[:-1] < xs[1:]
        if not cut_ok.any():
            continue
        c1l = np.cumsum(ys == 1)[:-1].astype(np.float64)
        c0l = np.cumsum(ys == 0)[:-1].astype(np.float64)
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        c1r = c1l[-1] + (1.0 if ys[-1] == 1 else 0.0) - c1l
        c0r = c0l[-1] + (1.0 if ys[-1] == 0 else 0.0) - c0l
        valid = cut_ok & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        score = (c0l * c0l + c1l * c1l) / nl + (c0r * c0r + c1r * c1r) / nr
        score[~valid] = -np.inf
        i = int(np.argmax(score))          # first max: lowest threshold wins ties
        if score[i] > best_score:
            best_score = float(score[i])
            best = (best_score, int(f), float((xs[i] + xs[i + 1]) / 2.0))
    return best


def _gini(c0: float, c1: float) -> float:
    n = c0 + c1
    if n == 0:
        return 0.0
    return 1.0 - (c0 * c0 + c1 * c1) / (n * n)


def _grow_tree(x, y, max_features, min_leaf, rng, importance_acc):
    n_total = len(y)
    n_features = x.shape[1]
    feature = [0]
    threshold = [0.0]
    left = [-1]
    right = [-1]
    counts = [(0, 0)]
    stack = [(0, np.arange(n_total))]          # (node id, sample indices)

    while stack:
        node_id, idx = stack.pop()
        y_node = y[idx]
        c1 = int((y_node == 1).sum())
        c0 = len(idx) - c1
        counts[node_id] = (c0, c1)

        make_leaf = c0 == 0 or c1 == 0 or len(idx) < 2 * min_leaf
        split = None
        if not make_leaf:
            if max_features < n_features:
                chosen = rng.permutation(n_features)[:max_features]
            else:
                chosen = np.arange(n_features)
            split = _best_split(x[idx], y_node, chosen, min_leaf)
            make_leaf = split is None
        if make_leaf:
            feature[node_id] = -1
            continue

        _, f, thr = split
        go_left = x[idx, f] <= thr
        idx_l, idx_r = idx[go_left], idx[~go_left]
        c1l = int((y[idx_l] == 1).sum())
        c0l = len(idx_l) - c1l
        decrease = (len(idx) / n_total) * (
            _gini(c0, c1)
            - (len(idx_l) * _gini(c0l, c1l) + len(idx_r) * _gini(c0 - c0l, c1 - c1l))
            / len(idx)
        )
        importance_acc[f] += decrease

        feature[node_id] = f
        threshold[node_id] = thr
        for child_idx, slot in ((idx_l, "left"), (idx_r, "right")):
            child_id = len(feature)
            feature.append(0)
            threshold.append(0.0)
            left.append(-1)
            right.append(-1)
            counts.append((0, 0))
            if slot == "left":
                left[node_id] = child_id
            else:
                right[node_id] = child_id
            stack.append((child_id, child_idx))

    return DecisionTree(
        feature=np.asarray(feature, dtype=np.int32),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int32),
        right=np.asarray(right, dtype=np.int32),
        counts=np.asarray(counts, dtype=np.int64),
    )


def train_forest(x: FeatureMatrix, y, cfg: ForestConfig) -> Forest:
    """Fit the forest on standardized features; deterministic under cfg.seed.

    Each tree sees its own bootstrap resample (size N, with replacement) and
    draws a fresh feature subset per node from a per-tree generator spawned
    off the master seed, so serial and tree-parallel training agree.
    """
    data = np.asarray(x.values, dtype=np.float64)
    labels = np.asarray(y, dtype=np.int64)
    if len(data) < 2:
        raise EmptyData(f"need at least 2 samples, got {len(data)}")
    if len(data) != len(labels):
        raise EmptyData(f"{len(data)} rows vs {len(labels)} labels")
    if (labels == labels[0]).all():
        raise SingleClassData("training labels contain a single class")

    n, n_features = data.shape
    max_features = _resolve_max_features(cfg.max_features, n_features)
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees)

    trees: list[DecisionTree] = []
    importance_total = np.zeros(n_features)
    for tree_seed in streams:
        rng = np.random.default_rng(tree_seed)
        if cfg.bootstrap:
            sample = rng.integers(0, n, size=n)
            xt, yt = data[sample], labels[sample]
        else:
            xt, yt = data, labels
        acc = np.zeros(n_features)
        tree = _grow_tree(xt, yt, max_features, cfg.min_samples_leaf, rng, acc)
        trees.append(tree)
        if acc.sum() > 0:
            importance_total += acc / acc.sum()

    importances = importance_total / importance_total.sum() if importance_total.sum() else importance_total
    return Forest(
        trees=trees,
        feature_names=list(x.names),
        seed=cfg.seed,
        config=cfg,
        importances=importances,
    )


def rf_predict_proba(f: Forest, x: FeatureMatrix) -> np.ndarray:
    """Mean over trees of each leaf's theft fraction; one value per row."""
    if x.names != f.feature_names:
        raise NameMismatch(
            f"prediction features {x.names} do not match training features {f.feature_names}"
        )
    data = np.asarray(x.values, dtype=np.float64)
    acc = np.zeros(len(data))
    for tree in f.trees:
        acc += tree.predict_proba(data)
    return acc / f.n_trees


def feature_importances(f: Forest) -> list[tuple[str, float]]:
    """Mean impurity decrease per feature, normalized to sum 1."""
    if f.importances is None:
        raise UntrainedForest("forest has no recorded importances")
    return list(zip(f.feature_names, (float(v) for v in f.importances)))
