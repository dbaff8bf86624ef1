import numpy as np
import pytest
import scipy.sparse as sp

from gridtheft.errors import EmptyMask, NonFiniteActivation, SingleClassTrainSet
from gridtheft.features import FeatureMatrix
from gridtheft.gcn import (
    PARAM_NAMES,
    GcnParams,
    GcnTrainConfig,
    gcn_forward,
    gcn_predict_proba,
    init_params,
    loss_and_grads,
    train_gcn,
    weighted_nll,
)
from gridtheft.graph import NormalizedAdjacency, TemporalGraph, normalized_adjacency


def adjacency_from_edges(n, edges):
    fm = FeatureMatrix(["f"], np.zeros((n, 1)), [("S", i) for i in range(n)])
    g = TemporalGraph(fm, np.asarray(edges, dtype=np.int64).reshape(-1, 2),
                      np.zeros(n, dtype=np.int64), np.zeros(n, bool), np.zeros(n, bool))
    return normalized_adjacency(g)


def two_cluster_graph(n=20, gap=2.0, seed=0, noise=0.2):
    """Two feature clusters, one chain per cluster; linearly separable."""
    rng = np.random.default_rng(seed)
    half = n // 2
    x = np.vstack([
        rng.normal(-gap, noise, size=(half, 2)),
        rng.normal(gap, noise, size=(n - half, 2)),
    ])
    y = np.concatenate([np.zeros(half, dtype=np.int64), np.ones(n - half, dtype=np.int64)])
    edges = [[i, i + 1] for i in range(half - 1)]
    edges += [[i, i + 1] for i in range(half, n - 1)]
    fm = FeatureMatrix(["a", "b"], x, [("S", i) for i in range(n)])
    g = TemporalGraph(fm, np.asarray(edges, dtype=np.int64), y,
                      train_mask=np.ones(n, dtype=bool), test_mask=np.zeros(n, dtype=bool))
    return g, normalized_adjacency(g)


def logistic_oracle(features, y, epochs=4000, lr=0.5):
    """Brute-force logistic fit on pre-aggregated features."""
    w = np.zeros(features.shape[1])
    b = 0.0
    for _ in range(epochs):
        z = features @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        g = p - y
        w -= lr * features.T @ g / len(y)
        b -= lr * g.mean()
    return ((features @ w + b) > 0).astype(int)


# --- forward -----------------------------------------------------------------

def test_zero_weights_give_uniform_logits():
    adj = adjacency_from_edges(3, [[0, 1], [1, 2]])
    p = GcnParams(w0=np.zeros((2, 4)), b0=np.zeros(4), w1=np.zeros((4, 2)), b1=np.zeros(2))
    logp = gcn_forward(adj, np.ones((3, 2)), p)
    assert np.allclose(logp, np.log(0.5))


def test_scalar_forward_oracle():
    adj = NormalizedAdjacency(1, sp.csr_matrix(np.array([[1.0]])))
    p = GcnParams(w0=np.array([[1.0]]), b0=np.zeros(1),
                  w1=np.array([[1.0, -1.0]]), b1=np.zeros(2))
    logp = gcn_forward(adj, np.array([[2.0]]), p)
    lse = np.log(np.exp(2.0) + np.exp(-2.0))
    assert np.allclose(logp, [[2.0 - lse, -2.0 - lse]], atol=1e-12)


def test_eval_mode_deterministic():
    rng = np.random.default_rng(0)
    adj = adjacency_from_edges(6, [[i, i + 1] for i in range(5)])
    p = init_params(GcnTrainConfig(hidden=8, seed=1), 3)
    x = rng.normal(size=(6, 3))
    a = gcn_forward(adj, x, p, mode="eval")
    b = gcn_forward(adj, x, p, mode="eval")
    assert np.array_equal(a, b)


def test_rows_are_log_distributions():
    rng = np.random.default_rng(1)
    adj = adjacency_from_edges(10, [[i, i + 1] for i in range(9)])
    p = init_params(GcnTrainConfig(hidden=16, seed=2), 4)
    logp = gcn_forward(adj, rng.normal(size=(10, 4)), p)
    assert np.allclose(np.exp(logp).sum(axis=1), 1.0, atol=1e-9)
    lse = np.log(np.exp(logp).sum(axis=1))
    assert np.allclose(lse, 0.0, atol=1e-9)


def test_probability_complement():
    rng = np.random.default_rng(2)
    g, adj = two_cluster_graph(seed=3)
    p = init_params(GcnTrainConfig(hidden=8, seed=3), 2)
    logp = gcn_forward(adj, g.x, p)
    proba = np.exp(logp)
    assert np.allclose(proba[:, 0] + proba[:, 1], 1.0, atol=1e-9)


def test_non_finite_input_raises():
    adj = adjacency_from_edges(2, [[0, 1]])
    p = GcnParams(w0=np.ones((1, 2)), b0=np.zeros(2), w1=np.ones((2, 2)), b1=np.zeros(2))
    with pytest.raises(NonFiniteActivation):
        gcn_forward(adj, np.array([[np.inf], [1.0]]), p)


def test_sparse_matches_dense_products():
    rng = np.random.default_rng(4)
    for _ in range(10):
        n = int(rng.integers(2, 33))
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        k = int(rng.integers(0, len(pairs) + 1))
        chosen = [pairs[c] for c in rng.choice(len(pairs), size=k, replace=False)] if k else []
        adj = adjacency_from_edges(n, np.asarray(chosen, dtype=np.int64).reshape(-1, 2))
        p = init_params(GcnTrainConfig(hidden=8, seed=5), 3)
        x = rng.normal(size=(n, 3))
        dense = adj.toarray()
        h1 = np.maximum((dense @ x) @ p.w0 + p.b0, 0.0)
        logits = (dense @ h1) @ p.w1 + p.b1
        ref = logits - np.log(np.exp(logits - logits.max(1, keepdims=True)).sum(1, keepdims=True)) - logits.max(1, keepdims=True)
        got = gcn_forward(adj, x, p)
        assert np.max(np.abs(got - ref)) <= 1e-10


# --- loss --------------------------------------------------------------------

def test_nll_perfect_predictions():
    logp = np.array([[0.0, -50.0], [-50.0, 0.0]])
    y = np.array([0, 1])
    loss = weighted_nll(logp, y, np.array([1.0, 1.0]), np.array([True, True]))
    assert loss == pytest.approx(0.0)


def test_nll_uniform_single_node():
    logp = np.log(np.full((1, 2), 0.5))
    loss = weighted_nll(logp, np.array([1]), np.array([1.0, 1.0]), np.array([True]))
    assert loss == pytest.approx(np.log(2.0))


def test_nll_weighted_mean_normalization():
    logp = np.log(np.full((2, 2), 0.5))
    y = np.array([0, 1])
    loss = weighted_nll(logp, y, np.array([1.0, 3.0]), np.array([True, True]))
    # (1 * ln2 + 3 * ln2) / 4
    assert loss == pytest.approx(np.log(2.0))


def test_nll_empty_mask():
    with pytest.raises(EmptyMask):
        weighted_nll(np.zeros((2, 2)), np.zeros(2, int), np.ones(2), np.zeros(2, bool))


# --- training ----------------------------------------------------------------

def test_separable_clusters_reach_full_train_accuracy():
    g, adj = two_cluster_graph(seed=6)
    cfg = GcnTrainConfig(hidden=16, epochs=60, dropout=0.0, seed=7)
    params, history = train_gcn(g, adj, cfg)
    proba = gcn_predict_proba(g, adj, params)
    pred = (proba >= 0.5).astype(int)
    assert (pred == g.y).mean() == 1.0
    # oracle: plain logistic regression on the twice-aggregated features
    agg = adj.dot(adj.dot(g.x.values))
    assert (logistic_oracle(agg, g.y) == g.y).mean() == 1.0


def test_single_epoch_takes_one_step():
    g, adj = two_cluster_graph(seed=8)
    cfg = GcnTrainConfig(hidden=8, epochs=1, dropout=0.0, seed=9)
    params, history = train_gcn(g, adj, cfg)
    assert len(history) == 1
    init = init_params(cfg, 2)
    assert not np.array_equal(params.w0, init.w0)


def test_training_determinism():
    g, adj = two_cluster_graph(seed=10)
    cfg = GcnTrainConfig(hidden=12, epochs=25, dropout=0.2, seed=11)
    a, ha = train_gcn(g, adj, cfg)
    b, hb = train_gcn(g, adj, cfg)
    assert ha == hb
    for name in PARAM_NAMES:
        assert getattr(a, name).tobytes() == getattr(b, name).tobytes()


def test_loss_improves_over_training():
    g, adj = two_cluster_graph(seed=12)
    cfg = GcnTrainConfig(hidden=16, epochs=60, dropout=0.2, seed=13)
    _, history = train_gcn(g, adj, cfg)
    assert len(history) == 60
    assert history[-1] < history[0]


def test_single_class_train_mask_rejected():
    g, adj = two_cluster_graph(seed=14)
    g.train_mask = g.y == 0
    with pytest.raises(SingleClassTrainSet):
        train_gcn(g, adj, GcnTrainConfig(hidden=8, seed=15))


def test_raising_theft_weight_does_not_hurt_recall():
    # noisy imbalanced fixture where the unweighted model misses theft nodes
    rng = np.random.default_rng(16)
    n = 60
    y = np.zeros(n, dtype=np.int64)
    y[rng.choice(n, size=9, replace=False)] = 1
    x = rng.normal(0, 1.0, size=(n, 3))
    x[y == 1] += 0.9
    fm = FeatureMatrix(["a", "b", "c"], x, [("S", i) for i in range(n)])
    edges = np.asarray([[i, i + 1] for i in range(n - 1)], dtype=np.int64)
    g = TemporalGraph(fm, edges, y, np.ones(n, bool), np.zeros(n, bool))
    adj = normalized_adjacency(g)

    def train_recall(w1):
        cfg = GcnTrainConfig(hidden=16, epochs=60, dropout=0.0, seed=17,
                             class_weights=(1.0, w1))
        params, _ = train_gcn(g, adj, cfg)
        pred = (gcn_predict_proba(g, adj, params) >= 0.5).astype(int)
        tp = int(((pred == 1) & (y == 1)).sum())
        return tp / int((y == 1).sum())

    assert train_recall(10.0) >= train_recall(1.0)


def test_confident_normal_probability_is_tiny():
    g, adj = two_cluster_graph(n=30, gap=3.0, seed=18, noise=0.1)
    cfg = GcnTrainConfig(hidden=16, epochs=200, dropout=0.0, seed=19, weight_decay=0.0)
    params, _ = train_gcn(g, adj, cfg)
    proba = gcn_predict_proba(g, adj, params)
    normal_interior = proba[2:g.n_nodes // 2 - 2]
    assert np.all(normal_interior < 1e-6)


def test_uniform_logits_give_half_probability():
    adj = adjacency_from_edges(4, [[0, 1], [1, 2], [2, 3]])
    p = GcnParams(w0=np.zeros((2, 4)), b0=np.zeros(4), w1=np.zeros((4, 2)), b1=np.zeros(2))
    proba = gcn_predict_proba(FeatureMatrix(["a", "b"], np.ones((4, 2)), [("S", i) for i in range(4)]), adj, p)
    assert np.allclose(proba, 0.5)


# --- gradients ---------------------------------------------------------------

def test_gradients_match_finite_differences():
    rng = np.random.default_rng(20)
    adj = adjacency_from_edges(5, [[0, 1], [1, 2], [2, 3], [3, 4], [0, 4]])
    x = rng.normal(size=(5, 3))
    y = np.array([0, 1, 0, 1, 0])
    w = np.array([1.0, 2.5])
    mask = np.array([True, True, False, True, True])
    p = init_params(GcnTrainConfig(hidden=4, seed=21), 3)
    p.b0[:] = rng.uniform(-0.2, 0.2, 4)
    p.b1[:] = rng.uniform(-0.2, 0.2, 2)
    _, grads, _ = loss_and_grads(adj, x, y, w, mask, p)
    step = 1e-5
    for name in PARAM_NAMES:
        arr = getattr(p, name)
        numeric = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            keep = arr[ix]
            arr[ix] = keep + step
            up = weighted_nll(gcn_forward(adj, x, p), y, w, mask)
            arr[ix] = keep - step
            dn = weighted_nll(gcn_forward(adj, x, p), y, w, mask)
            arr[ix] = keep
            numeric[ix] = (up - dn) / (2 * step)
        rel = np.linalg.norm(grads[name] - numeric) / max(
            np.linalg.norm(grads[name]), np.linalg.norm(numeric), 1e-12
        )
        assert rel < 1e-4, f"{name}: relative error {rel}"
