"""Binary classification metrics with theft (1) as the positive class.

Everything is computed from first principles: counts, rank-statistic ROC-AUC
with ties worth one half, and a precision-recall sweep over every observed
score with step-sum area. Degenerate 0/0 ratios come back as 0 with a flag
instead of raising, so batch reporting survives empty-prediction edge cases.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, NonBinaryValue, SingleClassLabels


@dataclass
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class Report:
    """Per-class rows plus accuracy, in the usual two-row report shape."""

    theft: ClassMetrics
    normal: ClassMetrics
    accuracy: float
    degenerate: bool = False     # any 0/0 ratio was coerced to 0


@dataclass
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray
    auprc: float


@dataclass
class ReportBundle:
    """Everything the run reports for one model on one evaluation split."""

    report: Report
    confusion: ConfusionMatrix
    roc_auc: float
    auprc: float
    pr_points: np.ndarray        # (k, 2) recall, precision

    def to_json(self) -> str:
        r = self.report
        return json.dumps(
            {
                "classes": {
                    "normal": {
                        "precision": r.normal.precision,
                        "recall": r.normal.recall,
                        "f1": r.normal.f1,
                        "support": r.normal.support,
                    },
                    "theft": {
                        "precision": r.theft.precision,
                        "recall": r.theft.recall,
                        "f1": r.theft.f1,
                        "support": r.theft.support,
                    },
                },
                "accuracy": r.accuracy,
                "roc_auc": self.roc_auc,
                "auprc": self.auprc,
                "confusion": {
                    "tp": self.confusion.tp,
                    "fp": self.confusion.fp,
                    "tn": self.confusion.tn,
                    "fn": self.confusion.fn,
                },
            },
            indent=2,
            sort_keys=True,
        )


def _check_binary(name: str, values: np.ndarray) -> np.ndarray:
    v = np.asarray(values)
    if v.size and not np.isin(v, (0, 1)).all():
        raise NonBinaryValue(f"{name} must contain only 0/1")
    return v.astype(np.int64)


def confusion(y_true, y_pred) -> ConfusionMatrix:
    yt = _check_binary("y_true", y_true)
    yp = _check_binary("y_pred", y_pred)
    if yt.shape != yp.shape:
        raise LengthMismatch(f"{yt.shape} vs {yp.shape}")
    return ConfusionMatrix(
        tp=int(((yt == 1) & (yp == 1)).sum()),
        fp=int(((yt == 0) & (yp == 1)).sum()),
        tn=int(((yt == 0) & (yp == 0)).sum()),
        fn=int(((yt == 1) & (yp == 0)).sum()),
    )


def _ratio(num: int, den: int) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def classification_report(cm: ConfusionMatrix) -> Report:
    degenerate = False
    p1, d1 = _ratio(cm.tp, cm.tp + cm.fp)
    r1, d2 = _ratio(cm.tp, cm.tp + cm.fn)
    # class 0 rows come from swapping the positive designation
    p0, d3 = _ratio(cm.tn, cm.tn + cm.fn)
    r0, d4 = _ratio(cm.tn, cm.tn + cm.fp)
    acc, d5 = _ratio(cm.tp + cm.tn, cm.total)
    degenerate = d1 or d2 or d3 or d4 or d5
    return Report(
        theft=ClassMetrics(p1, r1, harmonic_f1(p1, r1), cm.tp + cm.fn),
        normal=ClassMetrics(p0, r0, harmonic_f1(p0, r0), cm.tn + cm.fp),
        accuracy=acc,
        degenerate=degenerate,
    )


def _check_two_classes(y: np.ndarray) -> None:
    if not ((y == 1).any() and (y == 0).any()):
        raise SingleClassLabels("need both classes present")


def roc_auc(scores, y_true) -> float:
    """Probability a random positive outscores a random negative, ties as 1/2.

    Rank-statistic form of the pairwise count, so it runs in O(n log n).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary("y_true", y_true)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} vs {y.shape}")
    _check_two_classes(y)
    ranks = rankdata(s, method="average")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _threshold_sweep(scores: np.ndarray, y: np.ndarray):
    """Cumulative TP/FP at each unique score, thresholds descending,
    predicting positive for score >= threshold."""
    order = np.argsort(-scores, kind="stable")
    s_sorted = scores[order]
    y_sorted = y[order]
    boundary = np.flatnonzero(np.diff(s_sorted) != 0.0)
    last = np.concatenate([boundary, [len(s_sorted) - 1]])
    tp = np.cumsum(y_sorted == 1)[last].astype(np.float64)
    fp = np.cumsum(y_sorted == 0)[last].astype(np.float64)
    return s_sorted[last], tp, fp


def pr_curve(scores, y_true) -> PrCurve:
    """One (recall, precision) point per unique threshold; step-sum area."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary("y_true", y_true)
    if s.shape != y.shape:
        raise LengthMismatch(f"{s.shape} vs {y.shape}")
    _check_two_classes(y)
    thresholds, tp, fp = _threshold_sweep(s, y)
    n_pos = float((y == 1).sum())
    recall = tp / n_pos
    precision = tp / (tp + fp)
    auprc = float(np.sum(np.diff(np.concatenate([[0.0], recall])) * precision))
    return PrCurve(recall, precision, thresholds, auprc)


def roc_curve_points(scores, y_true) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(fpr, tpr, thresholds) for curve export, thresholds descending."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary("y_true", y_true)
    _check_two_classes(y)
    thresholds, tp, fp = _threshold_sweep(s, y)
    tpr = tp / (y == 1).sum()
    fpr = fp / (y == 0).sum()
    return fpr, tpr, thresholds


def evaluate_scores(scores, y_true, y_pred) -> ReportBundle:
    """Full bundle: report from hard predictions, curves from scores."""
    cm = confusion(y_true, y_pred)
    report = classification_report(cm)
    auc = roc_auc(scores, y_true)
    pr = pr_curve(scores, y_true)
    return ReportBundle(
        report=report,
        confusion=cm,
        roc_auc=auc,
        auprc=pr.auprc,
        pr_points=np.column_stack([pr.recall, pr.precision]),
    )
