"""LSTM autoencoder for temporal anomaly scoring.

An encoder LSTM compresses each consumption window into a latent vector; a
decoder LSTM, fed that vector at every step, reconstructs the window through
a linear projection. The anomaly score of a window is its reconstruction
error, mean over timesteps of the squared per-step error norm. Trained only
on normal windows, the model reconstructs routine patterns well and fails
loudly on tampered spans.

Everything runs in float64 with hand-derived backpropagation through time;
gates are ordered (input, forget, cell, output) inside the stacked weight
matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateRange,
    DivergedLoss,
    EmptyTrainingSet,
    SeriesTooShort,
    ShapeMismatch,
    ZeroWindow,
)
from .optim import Adam

PARAM_NAMES = ("wx_e", "wh_e", "b_e", "wz", "bz", "wx_d", "wh_d", "b_d", "wo", "bo")


@dataclass
class SequenceWindow:
    """One fixed-length slice of a per-state series."""

    values: np.ndarray                       # (T, d)
    origin: tuple[str, int] = ("", -1)       # (state_id, end-time index)

    def __post_init__(self):
        self.values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if self.values.shape[0] < 2:
            raise ShapeMismatch(f"window length must be >= 2, got {self.values.shape[0]}")


@dataclass
class LstmAeConfig:
    window: int = 24
    hidden: int = 32
    latent: int = 8
    epochs: int = 100
    lr: float = 1e-3
    seed: int = 0
    min_improvement: float = 1e-6
    chunk: int = 1024          # gradient-accumulation chunk; affects memory only


@dataclass
class LstmAeParams:
    """Learned weights plus the training-score range used for normalization."""

    wx_e: np.ndarray           # (d, 4h) encoder input weights
    wh_e: np.ndarray           # (h, 4h) encoder recurrent weights
    b_e: np.ndarray            # (4h,)
    wz: np.ndarray             # (h, latent) bottleneck projection
    bz: np.ndarray             # (latent,)
    wx_d: np.ndarray           # (latent, 4h) decoder input weights
    wh_d: np.ndarray           # (h, 4h)
    b_d: np.ndarray            # (4h,)
    wo: np.ndarray             # (h, d) output projection
    bo: np.ndarray             # (d,)
    window: int
    input_dim: int
    hidden: int
    latent: int
    seed: int = 0
    score_min: float = 0.0
    score_max: float = 1.0
    loss_history: list[float] = field(default_factory=list)

    def as_dict(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}


def init_params(cfg: LstmAeConfig, input_dim: int) -> LstmAeParams:
    """Weights drawn uniform within +-1/sqrt(hidden); biases start at zero."""
    rng = np.random.default_rng(cfg.seed)
    h, lat, d = cfg.hidden, cfg.latent, input_dim
    k = 1.0 / np.sqrt(h)

    def u(*shape):
        return rng.uniform(-k, k, size=shape)

    return LstmAeParams(
        wx_e=u(d, 4 * h), wh_e=u(h, 4 * h), b_e=np.zeros(4 * h),
        wz=u(h, lat), bz=np.zeros(lat),
        wx_d=u(lat, 4 * h), wh_d=u(h, 4 * h), b_d=np.zeros(4 * h),
        wo=u(h, d), bo=np.zeros(d),
        window=cfg.window, input_dim=d, hidden=h, latent=lat, seed=cfg.seed,
    )


def make_windows(
    series: Sequence[float] | np.ndarray,
    window: int,
    stride: int = 1,
    state_id: str = "",
) -> list[SequenceWindow]:
    """Slice a per-state series into overlapping windows; never spans states
    because callers pass one state's series at a time."""
    if window < 2:
        raise ShapeMismatch(f"window length must be >= 2, got {window}")
    if stride < 1:
        raise ZeroWindow(f"stride must be >= 1, got {stride}")
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < window:
        raise SeriesTooShort(f"series length {n} < window {window}")
    out = []
    for start in range(0, n - window + 1, stride):
        end = start + window
        out.append(SequenceWindow(x[start:end].copy(), (state_id, end - 1)))
    return out


def stack_windows(windows) -> np.ndarray:
    """(B, T, d) array from SequenceWindows or raw arrays."""
    if isinstance(windows, np.ndarray) and windows.ndim == 3:
        return np.asarray(windows, dtype=np.float64)
    vals = [w.values if isinstance(w, SequenceWindow) else np.atleast_2d(w) for w in windows]
    return np.stack([np.asarray(v, dtype=np.float64) for v in vals])


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _lstm_forward(inputs: np.ndarray, wx, wh, b):
    """Run one LSTM over (T, B, din) inputs; cache activations for BPTT."""
    T, B, _ = inputs.shape
    h_dim = wh.shape[0]
    hs = np.zeros((T + 1, B, h_dim))
    cs = np.zeros((T + 1, B, h_dim))
    gates = np.zeros((T, B, 4 * h_dim))
    tanh_c = np.zeros((T, B, h_dim))
    for t in range(T):
        a = inputs[t] @ wx + hs[t] @ wh + b
        i = _sigmoid(a[:, :h_dim])
        f = _sigmoid(a[:, h_dim:2 * h_dim])
        g = np.tanh(a[:, 2 * h_dim:3 * h_dim])
        o = _sigmoid(a[:, 3 * h_dim:])
        cs[t + 1] = f * cs[t] + i * g
        tanh_c[t] = np.tanh(cs[t + 1])
        hs[t + 1] = o * tanh_c[t]
        gates[t] = np.concatenate([i, f, g, o], axis=1)
    return hs, cs, gates, tanh_c


def _lstm_backward(dh_out: np.ndarray, inputs, hs, cs, gates, tanh_c, wx, wh):
    """BPTT through one LSTM. dh_out is (T, B, h): upstream gradient into
    each hidden state. Returns (dwx, dwh, db, dinputs)."""
    T, B, _ = inputs.shape
    h_dim = wh.shape[0]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    db = np.zeros(4 * h_dim)
    dinputs = np.zeros_like(inputs)
    dh_next = np.zeros((B, h_dim))
    dc_next = np.zeros((B, h_dim))
    for t in range(T - 1, -1, -1):
        i = gates[t][:, :h_dim]
        f = gates[t][:, h_dim:2 * h_dim]
        g = gates[t][:, 2 * h_dim:3 * h_dim]
        o = gates[t][:, 3 * h_dim:]
        dh = dh_out[t] + dh_next
        do = dh * tanh_c[t]
        dc = dh * o * (1.0 - tanh_c[t] ** 2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * cs[t]
        dc_next = dc * f
        da = np.concatenate(
            [di * i * (1 - i), df * f * (1 - f), dg * (1 - g ** 2), do * o * (1 - o)],
            axis=1,
        )
        dwx += inputs[t].T @ da
        dwh += hs[t].T @ da
        db += da.sum(axis=0)
        dh_next = da @ wh.T
        dinputs[t] = da @ wx.T
    return dwx, dwh, db, dinputs


def _forward(x: np.ndarray, p: LstmAeParams):
    """Reconstruct a (B, T, d) batch; returns (x_hat, cache)."""
    B, T, d = x.shape
    enc_in = np.ascontiguousarray(x.transpose(1, 0, 2))
    enc = _lstm_forward(enc_in, p.wx_e, p.wh_e, p.b_e)
    h_last = enc[0][T]
    z = h_last @ p.wz + p.bz
    dec_in = np.broadcast_to(z, (T, B, p.latent)).copy()
    dec = _lstm_forward(dec_in, p.wx_d, p.wh_d, p.b_d)
    dec_hs = dec[0]
    y = dec_hs[1:] @ p.wo + p.bo                 # (T, B, d)
    x_hat = y.transpose(1, 0, 2)
    return x_hat, (enc_in, enc, h_last, z, dec_in, dec)


def reconstruct(p: LstmAeParams, windows) -> np.ndarray:
    x = stack_windows(windows)
    x_hat, _ = _forward(x, p)
    return x_hat


def loss_and_grads(windows, p: LstmAeParams) -> tuple[float, dict[str, np.ndarray]]:
    """Mean reconstruction error over the batch and exact analytic gradients.

    Loss = sum((x - x_hat)^2) / (B * T), matching the per-window anomaly
    score averaged over the batch.
    """
    x = stack_windows(windows)
    B, T, d = x.shape
    x_hat, (enc_in, enc, h_last, z, dec_in, dec) = _forward(x, p)
    diff = x_hat - x
    loss = float(np.sum(diff * diff) / (B * T))

    dy = (2.0 / (B * T)) * diff.transpose(1, 0, 2)         # (T, B, d)
    dec_hs = dec[0]
    flat_h = dec_hs[1:].reshape(T * B, p.hidden)
    dwo = flat_h.T @ dy.reshape(T * B, d)
    dbo = dy.sum(axis=(0, 1))
    dh_dec = dy @ p.wo.T

    dwx_d, dwh_d, db_d, ddec_in = _lstm_backward(
        dh_dec, dec_in, dec[0], dec[1], dec[2], dec[3], p.wx_d, p.wh_d
    )
    dz = ddec_in.sum(axis=0)
    dwz = h_last.T @ dz
    dbz = dz.sum(axis=0)
    dh_last = dz @ p.wz.T

    dh_enc = np.zeros((T, B, p.hidden))
    dh_enc[T - 1] = dh_last
    dwx_e, dwh_e, db_e, _ = _lstm_backward(
        dh_enc, enc_in, enc[0], enc[1], enc[2], enc[3], p.wx_e, p.wh_e
    )
    grads = {
        "wx_e": dwx_e, "wh_e": dwh_e, "b_e": db_e,
        "wz": dwz, "bz": dbz,
        "wx_d": dwx_d, "wh_d": dwh_d, "b_d": db_d,
        "wo": dwo, "bo": dbo,
    }
    return loss, grads


def _batched_loss_and_grads(x: np.ndarray, p: LstmAeParams, chunk: int):
    """Exact full-batch loss/gradients, accumulated over memory-sized chunks."""
    B, T, _ = x.shape
    total = 0.0
    grads = {name: np.zeros_like(getattr(p, name)) for name in PARAM_NAMES}
    for start in range(0, B, chunk):
        part = x[start:start + chunk]
        w = part.shape[0]
        loss_part, g_part = loss_and_grads(part, p)
        scale = (w * T) / (B * T)
        total += loss_part * scale
        for name in PARAM_NAMES:
            grads[name] += g_part[name] * scale
    return total, grads


def train_autoencoder(windows, cfg: LstmAeConfig) -> LstmAeParams:
    """Fit the autoencoder on normal-only training windows.

    Full-batch Adam, deterministic under cfg.seed; stops early once the
    epoch-over-epoch improvement drops below cfg.min_improvement. The
    training-score range is recorded for later normalization.
    """
    if not isinstance(windows, np.ndarray) and len(windows) == 0:
        raise EmptyTrainingSet("no training windows")
    x = stack_windows(windows)
    if x.size == 0 or x.shape[0] == 0:
        raise EmptyTrainingSet("no training windows")
    B, T, d = x.shape
    if T != cfg.window:
        cfg = replace(cfg, window=T)
    p = init_params(cfg, d)
    params = p.as_dict()
    opt = Adam(PARAM_NAMES, lr=cfg.lr)
    history: list[float] = []
    stalled = 0
    for _ in range(cfg.epochs):
        loss, grads = _batched_loss_and_grads(x, p, cfg.chunk)
        if not np.isfinite(loss):
            raise DivergedLoss(f"reconstruction loss became {loss}")
        history.append(loss)
        # early stop after three consecutive epochs under the improvement bar;
        # a single Adam jitter must not abort an otherwise healthy run
        if cfg.min_improvement > 0 and len(history) > 1:
            if history[-2] - loss < cfg.min_improvement:
                stalled += 1
                if stalled >= 3:
                    break
            else:
                stalled = 0
        opt.step(params, grads)

    if len(history) > 1 and history[-1] > history[0]:
        raise DivergedLoss(
            f"loss failed to improve over {len(history)} epochs "
            f"({history[0]:.6g} -> {history[-1]:.6g}); lower the learning rate"
        )
    for name in PARAM_NAMES:
        if not np.isfinite(getattr(p, name)).all():
            raise DivergedLoss(f"non-finite values in parameter {name}")

    scores = score_windows(p, x, chunk=cfg.chunk)
    p.score_min = float(scores.min())
    p.score_max = float(scores.max())
    p.loss_history = history
    return p


def anomaly_score(p: LstmAeParams, w) -> float:
    """Reconstruction error of one window: mean over timesteps of the squared
    per-step error norm."""
    values = w.values if isinstance(w, SequenceWindow) else np.atleast_2d(np.asarray(w, dtype=np.float64))
    if values.shape != (p.window, p.input_dim):
        raise ShapeMismatch(
            f"window shape {values.shape} != trained ({p.window}, {p.input_dim})"
        )
    x = values[None]
    x_hat, _ = _forward(x, p)
    return float(np.sum((x - x_hat) ** 2) / p.window)


def score_windows(p: LstmAeParams, windows, chunk: int = 4096) -> np.ndarray:
    """Anomaly score per window, batched."""
    x = stack_windows(windows)
    if x.shape[1] != p.window or x.shape[2] != p.input_dim:
        raise ShapeMismatch(
            f"window shape {x.shape[1:]} != trained ({p.window}, {p.input_dim})"
        )
    out = np.empty(x.shape[0])
    for start in range(0, x.shape[0], chunk):
        part = x[start:start + chunk]
        x_hat, _ = _forward(part, p)
        out[start:start + part.shape[0]] = np.sum((part - x_hat) ** 2, axis=(1, 2)) / p.window
    return out


def per_record_scores(p: LstmAeParams, series: np.ndarray) -> np.ndarray:
    """Raw score for every position of one state's series.

    Position k gets the score of the stride-1 window ending at k; the first
    window-1 positions have no window and come back as NaN for the caller to
    zero-fill after normalization.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    out = np.full(n, np.nan)
    if n < p.window:
        return out
    idx = np.arange(n - p.window + 1)
    windows = np.stack([x[i:i + p.window] for i in idx])
    out[p.window - 1:] = score_windows(p, windows)
    return out


def normalize_scores(scores, score_min: float, score_max: float) -> np.ndarray:
    """Min-max map onto [0, 1] using the fitted training range, clipped for
    out-of-range inference scores."""
    if not score_max > score_min:
        raise DegenerateRange(f"score range [{score_min}, {score_max}] is degenerate")
    s = np.asarray(scores, dtype=np.float64)
    return np.clip((s - score_min) / (score_max - score_min), 0.0, 1.0)


def classify_by_threshold(scores, tau: float) -> np.ndarray:
    """Standalone detector rule: flag = 1 iff score strictly exceeds tau."""
    return (np.asarray(scores, dtype=np.float64) > tau).astype(np.int64)
