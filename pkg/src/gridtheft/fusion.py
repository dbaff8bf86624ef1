"""Weighted fusion of the three model outputs and F1-optimal thresholding.

The hybrid score is a convex combination of the graph classifier probability,
the forest probability, and the normalized temporal anomaly score. The
decision threshold is the largest score value attaining the maximum F1 over
the precision-recall sweep of the calibration data; ties break toward fewer
flagged records because every flag costs an inspection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, SingleClassLabels, WeightSumViolation
from .metrics import _check_binary, _check_two_classes, _threshold_sweep


@dataclass(frozen=True)
class FusionWeights:
    alpha: float = 0.4      # graph classifier
    beta: float = 0.4       # random forest
    gamma: float = 0.2      # temporal anomaly score

    def __post_init__(self):
        if min(self.alpha, self.beta, self.gamma) < 0.0:
            raise WeightSumViolation("fusion weights must be nonnegative")
        total = self.alpha + self.beta + self.gamma
        if abs(total - 1.0) > 1e-9:
            raise WeightSumViolation(f"fusion weights sum to {total}, expected 1")


@dataclass
class ScoreTriple:
    """Per-record model outputs destined for fusion."""

    p_gnn: float
    p_rf: float
    s_norm: float
    key: tuple[str, int] | None = None

    def __post_init__(self):
        for name in ("p_gnn", "p_rf", "s_norm"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DataError(f"{name}={v} outside [0, 1]")


@dataclass
class CalibratedThreshold:
    tau: float
    precision: float
    recall: float
    f1: float


def hybrid_score(t: ScoreTriple, w: FusionWeights) -> float:
    return w.alpha * t.p_gnn + w.beta * t.p_rf + w.gamma * t.s_norm


def hybrid_scores(p_gnn, p_rf, s_norm, w: FusionWeights) -> np.ndarray:
    """Vectorized fusion over per-record score arrays."""
    a = np.asarray(p_gnn, dtype=np.float64)
    b = np.asarray(p_rf, dtype=np.float64)
    c = np.asarray(s_norm, dtype=np.float64)
    for name, v in (("p_gnn", a), ("p_rf", b), ("s_norm", c)):
        if v.size and (v.min() < -1e-9 or v.max() > 1.0 + 1e-9):
            raise DataError(f"{name} outside [0, 1]")
    return w.alpha * np.clip(a, 0, 1) + w.beta * np.clip(b, 0, 1) + w.gamma * np.clip(c, 0, 1)


def calibrate_threshold(scores, labels) -> CalibratedThreshold:
    """F1-maximizing threshold over every distinct score plus {0, 1}.

    Prediction rule is score >= tau. Ties in F1 resolve to the largest tau.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary("labels", labels)
    if s.shape != y.shape or s.size == 0:
        raise SingleClassLabels("scores/labels must be same-length and non-empty")
    _check_two_classes(y)

    thresholds, tp, fp = _threshold_sweep(s, y)
    n_pos = float((y == 1).sum())
    fn = n_pos - tp
    f1 = np.where(2 * tp + fp + fn > 0, 2 * tp / (2 * tp + fp + fn), 0.0)

    # candidates 0 and 1 beyond the observed range: everything / nothing flagged
    cand_tau = list(thresholds) + [0.0, 1.0]
    all_pos_f1 = 2 * n_pos / (2 * n_pos + float((y == 0).sum()))
    cand_f1 = list(f1) + [
        all_pos_f1 if thresholds.min() > 0.0 else f1[-1],
        f1[0] if thresholds.max() >= 1.0 else 0.0,
    ]

    best_tau, best_f1 = None, -1.0
    for tau, score in zip(cand_tau, cand_f1):
        if score > best_f1 or (score == best_f1 and tau > best_tau):
            best_tau, best_f1 = float(tau), float(score)

    flags = (s >= best_tau).astype(np.int64)
    tp_b = float(((y == 1) & (flags == 1)).sum())
    fp_b = float(((y == 0) & (flags == 1)).sum())
    fn_b = float(((y == 1) & (flags == 0)).sum())
    precision = tp_b / (tp_b + fp_b) if tp_b + fp_b else 0.0
    recall = tp_b / (tp_b + fn_b) if tp_b + fn_b else 0.0
    return CalibratedThreshold(best_tau, precision, recall, best_f1)


def apply_flag(scores, tau) -> np.ndarray:
    """Binary flags: 1 iff score >= tau (boundary flags positive)."""
    t = tau.tau if isinstance(tau, CalibratedThreshold) else float(tau)
    return (np.asarray(scores, dtype=np.float64) >= t).astype(np.int64)
