import numpy as np
import pytest

from gridtheft.errors import (
    DegenerateRange,
    EmptyTrainingSet,
    SeriesTooShort,
    ShapeMismatch,
    ZeroWindow,
)
from gridtheft.lstm_ae import (
    PARAM_NAMES,
    LstmAeConfig,
    SequenceWindow,
    anomaly_score,
    classify_by_threshold,
    init_params,
    loss_and_grads,
    make_windows,
    normalize_scores,
    per_record_scores,
    score_windows,
    stack_windows,
    train_autoencoder,
)


def zero_output_params(window, input_dim=1, hidden=4, latent=2):
    """Parameters whose reconstruction is identically zero."""
    p = init_params(LstmAeConfig(window=window, hidden=hidden, latent=latent, seed=0), input_dim)
    p.wo[:] = 0.0
    p.bo[:] = 0.0
    return p


def sine_windows(n_windows=60, window=16, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n_windows):
        phase = rng.uniform(0, 2 * np.pi)
        t = np.arange(window)
        out.append(np.sin(2 * np.pi * t / window + phase)[:, None])
    return np.stack(out)


# --- windowing ---------------------------------------------------------------

def test_window_counts_disjoint():
    windows = make_windows(np.arange(10.0), 5, stride=5, state_id="TX")
    assert len(windows) == 2
    assert windows[0].values.ravel().tolist() == [0, 1, 2, 3, 4]
    assert windows[1].values.ravel().tolist() == [5, 6, 7, 8, 9]
    assert windows[0].origin == ("TX", 4)
    assert windows[1].origin == ("TX", 9)


def test_window_exact_fit():
    windows = make_windows(np.arange(5.0), 5)
    assert len(windows) == 1
    assert windows[0].values.ravel().tolist() == [0, 1, 2, 3, 4]


def test_window_too_short():
    with pytest.raises(SeriesTooShort):
        make_windows(np.arange(4.0), 5)


def test_window_count_formula():
    for n, t, s in [(20, 4, 1), (20, 4, 3), (33, 7, 5), (10, 2, 9)]:
        windows = make_windows(np.arange(float(n)), t, stride=s)
        assert len(windows) == (n - t) // s + 1


def test_window_stride_validation():
    with pytest.raises(ZeroWindow):
        make_windows(np.arange(10.0), 4, stride=0)
    with pytest.raises(ShapeMismatch):
        make_windows(np.arange(10.0), 1)


# --- scoring -----------------------------------------------------------------

def test_score_zero_for_perfect_reconstruction():
    p = zero_output_params(window=4)
    w = SequenceWindow(np.zeros((4, 1)))
    assert anomaly_score(p, w) == 0.0


def test_score_hand_example_two_steps():
    # reconstruction fixed at zero: x=[1,2] gives (1 + 4) / 2
    p = zero_output_params(window=2)
    assert anomaly_score(p, np.array([[1.0], [2.0]])) == pytest.approx(2.5)


def test_score_constant_unit_error():
    p = zero_output_params(window=4)
    assert anomaly_score(p, np.ones((4, 1))) == pytest.approx(1.0)


def test_score_ignores_origin_metadata():
    p = zero_output_params(window=3)
    values = np.array([[0.5], [1.0], [2.0]])
    a = anomaly_score(p, SequenceWindow(values, ("AL", 7)))
    b = anomaly_score(p, SequenceWindow(values, ("ZZ", 12345)))
    assert a == b


def test_score_shape_mismatch():
    p = zero_output_params(window=4)
    with pytest.raises(ShapeMismatch):
        anomaly_score(p, np.ones((5, 1)))


def test_batch_scores_match_single():
    rng = np.random.default_rng(1)
    p = init_params(LstmAeConfig(window=6, hidden=5, latent=3, seed=2), 1)
    batch = rng.normal(size=(9, 6, 1))
    scores = score_windows(p, batch)
    for i in range(9):
        assert scores[i] == pytest.approx(anomaly_score(p, batch[i]), abs=1e-12)


# --- training ----------------------------------------------------------------

def test_constant_zero_windows_converge_fast():
    windows = np.zeros((12, 8, 1))
    cfg = LstmAeConfig(window=8, hidden=4, latent=2, epochs=50, lr=1e-2, seed=3)
    p = train_autoencoder(windows, cfg)
    assert p.loss_history[-1] < 1e-6
    assert len(p.loss_history) <= 50


def test_sine_compression():
    windows = sine_windows()
    cfg = LstmAeConfig(window=16, hidden=16, latent=4, epochs=150, lr=1e-2,
                       seed=4, min_improvement=0.0)
    p = train_autoencoder(windows, cfg)
    assert p.loss_history[-1] < p.loss_history[0] / 10.0


def test_training_loss_decreases_over_warmup():
    windows = sine_windows(seed=5)
    cfg = LstmAeConfig(window=16, hidden=8, latent=3, epochs=10, lr=5e-3, seed=5)
    p = train_autoencoder(windows, cfg)
    warm = p.loss_history[:5]
    assert all(b < a for a, b in zip(warm, warm[1:]))


def test_trained_beats_untrained_on_training_window():
    windows = sine_windows(seed=6)
    cfg = LstmAeConfig(window=16, hidden=16, latent=4, epochs=120, lr=1e-2,
                       seed=6, min_improvement=0.0)
    trained = train_autoencoder(windows, cfg)
    untrained = init_params(cfg, 1)
    w = windows[0]
    assert anomaly_score(trained, w) < anomaly_score(untrained, w)


def test_training_determinism():
    windows = sine_windows(n_windows=20, seed=7)
    cfg = LstmAeConfig(window=16, hidden=6, latent=3, epochs=15, lr=1e-2, seed=99)
    a = train_autoencoder(windows, cfg)
    b = train_autoencoder(windows, cfg)
    for name in PARAM_NAMES:
        ga, gb = getattr(a, name), getattr(b, name)
        assert ga.tobytes() == gb.tobytes()
    assert a.score_min == b.score_min and a.score_max == b.score_max


def test_empty_training_set():
    with pytest.raises(EmptyTrainingSet):
        train_autoencoder([], LstmAeConfig())


# --- gradients ---------------------------------------------------------------

def test_bptt_matches_finite_differences():
    rng = np.random.default_rng(8)
    cfg = LstmAeConfig(window=4, hidden=3, latent=2, seed=11)
    p = init_params(cfg, 1)
    for name in ("b_e", "bz", "b_d", "bo"):
        getattr(p, name)[:] = rng.uniform(-0.3, 0.3, getattr(p, name).shape)
    x = rng.normal(size=(5, 4, 1))
    _, grads = loss_and_grads(x, p)
    step = 1e-5
    for name in PARAM_NAMES:
        arr = getattr(p, name)
        numeric = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            ix = it.multi_index
            keep = arr[ix]
            arr[ix] = keep + step
            up, _ = loss_and_grads(x, p)
            arr[ix] = keep - step
            dn, _ = loss_and_grads(x, p)
            arr[ix] = keep
            numeric[ix] = (up - dn) / (2 * step)
        analytic = grads[name]
        rel = np.linalg.norm(analytic - numeric) / max(
            np.linalg.norm(analytic), np.linalg.norm(numeric), 1e-12
        )
        assert rel < 1e-4, f"{name}: relative error {rel}"


# --- normalization and thresholding -------------------------------------------

def test_normalize_midpoint():
    assert normalize_scores([1.0], 0.0, 2.0).tolist() == [0.5]


def test_normalize_bounds_and_clip():
    assert normalize_scores([0.0], 0.0, 2.0).tolist() == [0.0]
    assert normalize_scores([3.0], 0.0, 2.0).tolist() == [1.0]


def test_normalize_always_unit_interval():
    rng = np.random.default_rng(9)
    s = rng.uniform(-5, 15, 200)
    z = normalize_scores(s, 1.0, 4.0)
    assert np.all((z >= 0.0) & (z <= 1.0))


def test_normalize_degenerate_range():
    with pytest.raises(DegenerateRange):
        normalize_scores([1.0], 2.0, 2.0)


def test_threshold_rules():
    assert classify_by_threshold([0.0, 0.0], 0.5).tolist() == [0, 0]
    assert classify_by_threshold([0.2, 0.9], -1.0).tolist() == [1, 1]
    assert classify_by_threshold([0.5], 0.5).tolist() == [0]    # strict inequality


def test_threshold_at_percentile_flags_outliers():
    rng = np.random.default_rng(10)
    scores = np.concatenate([rng.uniform(0, 0.3, 95), rng.uniform(0.8, 1.0, 5)])
    tau = float(np.percentile(scores, 95))
    flags = classify_by_threshold(scores, tau)
    assert flags[:95].sum() == 0
    assert flags[95:].sum() == (scores[95:] > tau).sum() >= 4


def test_per_record_scores_warmup_nan():
    p = zero_output_params(window=4)
    series = np.arange(10.0)
    raw = per_record_scores(p, series)
    assert np.isnan(raw[:3]).all()
    assert np.isfinite(raw[3:]).all()
    # each position scores the window ending there
    assert raw[3] == pytest.approx(anomaly_score(p, series[:4, None]))
    assert raw[9] == pytest.approx(anomaly_score(p, series[6:, None]))


def test_stack_windows_accepts_mixed():
    arr = stack_windows([SequenceWindow(np.ones((3, 1))), np.zeros((3, 1))])
    assert arr.shape == (2, 3, 1)
