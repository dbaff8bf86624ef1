import numpy as np
import pytest

from gridtheft.errors import DataError, SingleClassLabels, WeightSumViolation
from gridtheft.fusion import (
    CalibratedThreshold,
    FusionWeights,
    ScoreTriple,
    apply_flag,
    calibrate_threshold,
    hybrid_score,
    hybrid_scores,
)
from gridtheft.metrics import harmonic_f1

# published sample rows: near-zero graph probability, small forest
# probability, zero anomaly score
SAMPLE_ROWS = [
    (7.596640e-15, 0.13, 0.0, 0.052),
    (7.200230e-16, 0.13, 0.0, 0.052),
    (9.720065e-16, 0.24, 0.0, 0.096),
    (1.778521e-16, 0.13, 0.0, 0.052),
    (3.766607e-17, 0.27, 0.0, 0.108),
    (7.145553e-18, 0.27, 0.0, 0.108),
    (4.337586e-18, 0.26, 0.0, 0.104),
    (7.596083e-17, 0.27, 0.0, 0.108),
    (7.416186e-17, 0.15, 0.0, 0.060),
    (3.786822e-16, 0.13, 0.0, 0.052),
]


def scan_oracle(scores, labels):
    """Brute-force F1 scan over every unique score plus the {0, 1} anchors,
    predicting positive for score >= tau; ties resolve to the largest tau."""
    best_tau, best_f1 = None, -1.0
    for tau in sorted(set(list(scores) + [0.0, 1.0])):
        pred = [1 if s >= tau else 0 for s in scores]
        tp = sum(1 for p, y in zip(pred, labels) if p == 1 and y == 1)
        fp = sum(1 for p, y in zip(pred, labels) if p == 1 and y == 0)
        fn = sum(1 for p, y in zip(pred, labels) if p == 0 and y == 1)
        f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        if f1 > best_f1 or (f1 == best_f1 and tau > best_tau):
            best_tau, best_f1 = tau, f1
    return best_tau, best_f1


def test_sample_rows_reproduced():
    w = FusionWeights(0.4, 0.4, 0.2)
    for p_gnn, p_rf, s_norm, expected in SAMPLE_ROWS:
        got = hybrid_score(ScoreTriple(p_gnn, p_rf, s_norm), w)
        assert got == pytest.approx(expected, abs=5e-4)


def test_degenerate_weighting():
    w = FusionWeights(1.0, 0.0, 0.0)
    t = ScoreTriple(0.37, 0.9, 0.1)
    assert hybrid_score(t, w) == 0.37


def test_weight_sum_violation():
    with pytest.raises(WeightSumViolation):
        FusionWeights(0.5, 0.5, 0.1)
    with pytest.raises(WeightSumViolation):
        FusionWeights(-0.2, 0.6, 0.6)


def test_score_triple_range_check():
    with pytest.raises(DataError):
        ScoreTriple(1.2, 0.0, 0.0)


def test_vectorized_matches_scalar():
    rng = np.random.default_rng(0)
    w = FusionWeights()
    p_gnn, p_rf, s_norm = rng.uniform(0, 1, (3, 40))
    vec = hybrid_scores(p_gnn, p_rf, s_norm, w)
    for i in range(40):
        assert vec[i] == pytest.approx(hybrid_score(ScoreTriple(p_gnn[i], p_rf[i], s_norm[i]), w))


def test_hybrid_monotone_in_each_component():
    w = FusionWeights()
    base = hybrid_score(ScoreTriple(0.3, 0.4, 0.5), w)
    assert hybrid_score(ScoreTriple(0.4, 0.4, 0.5), w) >= base
    assert hybrid_score(ScoreTriple(0.3, 0.5, 0.5), w) >= base
    assert hybrid_score(ScoreTriple(0.3, 0.4, 0.6), w) >= base


def test_gamma_zero_ignores_anomaly_score():
    w = FusionWeights(0.5, 0.5, 0.0)
    a = hybrid_score(ScoreTriple(0.3, 0.4, 0.0), w)
    b = hybrid_score(ScoreTriple(0.3, 0.4, 1.0), w)
    assert a == b


# --- calibration -------------------------------------------------------------

def test_calibrate_two_points():
    cal = calibrate_threshold([0.1, 0.9], [0, 1])
    assert cal.tau == 0.9
    assert cal.f1 == 1.0


def test_calibrate_four_point_enumeration():
    # enumeration oracle: max F1 = 0.8 at tau = 0.4 (TP=2, FP=1, FN=0)
    scores = [0.2, 0.4, 0.6, 0.8]
    labels = [0, 1, 0, 1]
    tau_ref, f1_ref = scan_oracle(scores, labels)
    assert (tau_ref, f1_ref) == (0.4, pytest.approx(0.8))
    cal = calibrate_threshold(scores, labels)
    assert cal.tau == tau_ref
    assert cal.f1 == pytest.approx(f1_ref)
    assert cal.precision == pytest.approx(2 / 3)
    assert cal.recall == 1.0


def test_calibrate_single_class():
    with pytest.raises(SingleClassLabels):
        calibrate_threshold([0.1, 0.9], [0, 0])


def test_calibrate_tie_breaks_toward_larger_tau():
    # F1 is 2/3 both at tau=0.4 and at tau=0 (everything flagged)
    cal = calibrate_threshold([0.4, 0.6], [1, 0])
    assert cal.tau == 0.4


def test_calibrate_matches_oracle_on_random_sets():
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(5, 400))
        y = rng.integers(0, 2, n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        scores = np.round(rng.uniform(0, 1, n), 2)
        cal = calibrate_threshold(scores, y)
        tau_ref, f1_ref = scan_oracle(scores.tolist(), y.tolist())
        assert cal.f1 == pytest.approx(f1_ref, abs=1e-12)
        assert cal.tau == pytest.approx(tau_ref, abs=1e-12)


def test_calibrate_permutation_invariant():
    rng = np.random.default_rng(8)
    y = rng.integers(0, 2, 60)
    y[:2] = [0, 1]
    scores = rng.uniform(0, 1, 60)
    cal = calibrate_threshold(scores, y)
    perm = rng.permutation(60)
    cal_p = calibrate_threshold(scores[perm], y[perm])
    assert cal.tau == cal_p.tau
    flags = apply_flag(scores, cal)
    assert np.array_equal(apply_flag(scores[perm], cal_p), flags[perm])


def test_apply_flag_rules():
    flags = apply_flag([0.0, 0.049, 0.052, 0.9], CalibratedThreshold(0.052, 0, 0, 0))
    assert flags.tolist() == [0, 0, 1, 1]       # boundary score flags positive
    assert apply_flag([0.2, 0.9], 0.0).tolist() == [1, 1]
    # sample rows all score at most 0.108: never flagged above that
    scores = [row[3] for row in SAMPLE_ROWS]
    assert apply_flag(scores, 0.109).sum() == 0


def test_calibrated_f1_dominates_every_threshold():
    rng = np.random.default_rng(9)
    y = rng.integers(0, 2, 500)
    y[:2] = [0, 1]
    scores = np.round(rng.beta(2, 5, 500) + 0.4 * y, 3).clip(0, 1)
    cal = calibrate_threshold(scores, y)
    for tau in np.unique(scores):
        pred = (scores >= tau).astype(int)
        tp = int(((pred == 1) & (y == 1)).sum())
        fp = int(((pred == 1) & (y == 0)).sum())
        fn = int(((pred == 0) & (y == 1)).sum())
        f1 = 2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else 0.0
        assert cal.f1 >= f1 - 1e-12
