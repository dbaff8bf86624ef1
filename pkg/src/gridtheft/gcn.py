"""Two-layer graph convolutional classifier over the temporal graph.

Each layer aggregates neighbor features through the symmetric-normalized
self-loop adjacency and applies a learned linear map: hidden layer with ReLU
and (train-time) dropout, output layer with log-softmax. Training minimizes
class-weighted negative log-likelihood on the train mask only, while every
node participates in propagation, and runs Adam with L2 weight decay on the
weight matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    DivergedLoss,
    EmptyMask,
    NonFiniteActivation,
    ShapeMismatch,
    SingleClassTrainSet,
)
from .features import FeatureMatrix
from .graph import NormalizedAdjacency, TemporalGraph
from .optim import Adam

PARAM_NAMES = ("w0", "b0", "w1", "b1")


@dataclass
class GcnParams:
    w0: np.ndarray             # (F, hidden)
    b0: np.ndarray             # (hidden,)
    w1: np.ndarray             # (hidden, 2)
    b1: np.ndarray             # (2,)
    use_bias: bool = True

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


@dataclass
class GcnTrainConfig:
    hidden: int = 128
    lr: float = 0.01
    weight_decay: float = 5e-4
    epochs: int = 60
    dropout: float = 0.2
    class_weights: Optional[tuple[float, float]] = None    # None: inverse frequency
    use_bias: bool = True
    seed: int = 0


def init_params(cfg: GcnTrainConfig, n_features: int) -> GcnParams:
    rng = np.random.default_rng(cfg.seed)

    def u(fan_in, *shape):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=shape)

    return GcnParams(
        w0=u(n_features, n_features, cfg.hidden),
        b0=np.zeros(cfg.hidden),
        w1=u(cfg.hidden, cfg.hidden, 2),
        b1=np.zeros(2),
        use_bias=cfg.use_bias,
    )


def _features(x) -> np.ndarray:
    vals = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    return np.asarray(vals, dtype=np.float64)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=1, keepdims=True)
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def gcn_forward(
    adj: NormalizedAdjacency,
    x,
    p: GcnParams,
    mode: str = "eval",
    dropout: float = 0.0,
    seed: Optional[int] = None,
) -> np.ndarray:
    """Log-probability matrix (N, 2). Dropout (inverted, after the first
    activation) applies only in train mode and draws its mask from ``seed``."""
    logp, _ = _forward_cached(adj, x, p, mode=mode, dropout=dropout, seed=seed)
    return logp


def _forward_cached(adj, x, p, mode="eval", dropout=0.0, seed=None, rng=None):
    feats = _features(x)
    if feats.shape[1] != p.w0.shape[0]:
        raise ShapeMismatch(f"{feats.shape[1]} features vs w0 {p.w0.shape}")
    z0 = adj.dot(feats)
    a1 = z0 @ p.w0
    if p.use_bias:
        a1 = a1 + p.b0
    h1 = np.maximum(a1, 0.0)
    mask = None
    if mode == "train" and dropout > 0.0:
        if rng is None:
            rng = np.random.default_rng(seed)
        keep = 1.0 - dropout
        mask = (rng.random(h1.shape) < keep) / keep
        h1 = h1 * mask
    z1 = adj.dot(h1)
    a2 = z1 @ p.w1
    if p.use_bias:
        a2 = a2 + p.b1
    if not np.isfinite(a2).all():
        raise NonFiniteActivation("non-finite logits in graph forward pass")
    logp = _log_softmax(a2)
    cache = (feats, z0, a1, mask, h1, z1, logp)
    return logp, cache


def weighted_nll(logp: np.ndarray, y, w, mask) -> float:
    """Weighted-mean negative log-likelihood over the masked nodes."""
    y = np.asarray(y, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("loss mask selects no nodes")
    w = np.asarray(w, dtype=np.float64)
    wy = w[y[mask]]
    nll = -logp[mask, y[mask]]
    return float((wy * nll).sum() / wy.sum())


def loss_and_grads(adj, x, y, w, mask, p: GcnParams, dropout_cache=None):
    """Weighted NLL and analytic gradients for every parameter.

    ``dropout_cache`` carries a pre-drawn mask so the training loop and
    gradient checks stay reproducible; None means no dropout.
    """
    y = np.asarray(y, dtype=np.int64)
    mask = np.asarray(mask, dtype=bool)
    w = np.asarray(w, dtype=np.float64)
    feats = _features(x)
    z0 = adj.dot(feats)
    a1 = z0 @ p.w0
    if p.use_bias:
        a1 = a1 + p.b0
    h1 = np.maximum(a1, 0.0)
    h1d = h1 * dropout_cache if dropout_cache is not None else h1
    z1 = adj.dot(h1d)
    a2 = z1 @ p.w1
    if p.use_bias:
        a2 = a2 + p.b1
    if not np.isfinite(a2).all():
        raise NonFiniteActivation("non-finite logits in graph forward pass")
    logp = _log_softmax(a2)
    loss = weighted_nll(logp, y, w, mask)

    # d loss / d a2: weighted softmax-minus-onehot rows on the mask
    n = feats.shape[0]
    coef = np.zeros(n)
    wy = w[y[mask]]
    coef[mask] = wy / wy.sum()
    prob = np.exp(logp)
    onehot = np.zeros_like(prob)
    onehot[np.arange(n), y] = 1.0
    da2 = coef[:, None] * (prob - onehot)

    dw1 = z1.T @ da2
    db1 = da2.sum(axis=0)
    dz1 = da2 @ p.w1.T
    dh1d = adj.dot(dz1)                    # adjacency is symmetric
    dh1 = dh1d * dropout_cache if dropout_cache is not None else dh1d
    da1 = dh1 * (a1 > 0.0)
    dw0 = z0.T @ da1
    db0 = da1.sum(axis=0)
    grads = {"w0": dw0, "b0": db0, "w1": dw1, "b1": db1}
    return loss, grads, logp


def train_gcn(
    g: TemporalGraph, adj: NormalizedAdjacency, cfg: GcnTrainConfig
) -> tuple[GcnParams, list[float]]:
    """Full-graph Adam training for exactly cfg.epochs steps.

    Returns the trained parameters and the per-epoch loss curve. Class
    weights default to inverse class frequency on the train mask, so the
    rare theft class carries a proportionally higher penalty.
    """
    mask = np.asarray(g.train_mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("train mask selects no nodes")
    y_masked = g.y[mask]
    if (y_masked == y_masked[0]).all():
        raise SingleClassTrainSet("train mask must contain both classes")

    if cfg.class_weights is None:
        n_m = mask.sum()
        counts = np.bincount(y_masked, minlength=2).astype(np.float64)
        weights = n_m / (2.0 * counts)
    else:
        weights = np.asarray(cfg.class_weights, dtype=np.float64)

    p = init_params(cfg, _features(g.x).shape[1])
    params = p.as_dict()
    opt = Adam(PARAM_NAMES, lr=cfg.lr)
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 0xD120)))
    history: list[float] = []
    keep = 1.0 - cfg.dropout
    n_nodes = g.n_nodes
    for _ in range(cfg.epochs):
        drop = None
        if cfg.dropout > 0.0:
            drop = (rng.random((n_nodes, cfg.hidden)) < keep) / keep
        loss, grads, _ = loss_and_grads(adj, g.x, g.y, weights, mask, p, dropout_cache=drop)
        if not np.isfinite(loss):
            raise DivergedLoss(f"training loss became {loss}")
        history.append(loss)
        if cfg.weight_decay:
            grads["w0"] = grads["w0"] + cfg.weight_decay * p.w0
            grads["w1"] = grads["w1"] + cfg.weight_decay * p.w1
        if not p.use_bias:
            grads.pop("b0")
            grads.pop("b1")
        opt.step(params, grads)

    if len(history) > 1 and history[-1] >= history[0]:
        raise DivergedLoss(
            f"loss failed to improve over {cfg.epochs} epochs "
            f"({history[0]:.6f} -> {history[-1]:.6f})"
        )
    return p, history


def gcn_predict_proba(g_or_x, adj: NormalizedAdjacency, p: GcnParams) -> np.ndarray:
    """Theft-class probability per node, eval mode (no dropout)."""
    x = g_or_x.x if isinstance(g_or_x, TemporalGraph) else g_or_x
    logp = gcn_forward(adj, x, p, mode="eval")
    return np.exp(logp[:, 1])
