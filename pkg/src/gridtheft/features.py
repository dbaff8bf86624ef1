"""Engineered feature set: rolling aggregates, expected load, the grid
imbalance index, a voltage-drop proxy, plus standardization and column
alignment.

The imbalance index is the workhorse feature: the absolute relative gap
between metered consumption and a per-state linear model of expected load
driven by temperature and a trailing moving average. Sustained under-metering
pushes it up regardless of the state's absolute scale.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyMatrix,
    EmptySeries,
    NameMismatch,
    NegativeLoad,
    UnfittedCoefficients,
    ZeroWindow,
)
from .ingestion import Dataset

DEFAULT_EPSILON = 1e-5


@dataclass
class FeatureMatrix:
    """Named feature columns over the dataset rows, one row per record."""

    names: list[str]
    values: np.ndarray                     # (N, F) float64
    row_keys: list[tuple[str, int]]        # (state_id, t) per row

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise EmptyMatrix(f"expected 2-D values, got shape {self.values.shape}")
        if len(self.names) != self.values.shape[1]:
            raise NameMismatch(
                f"{len(self.names)} names for {self.values.shape[1]} columns"
            )
        if len(set(self.names)) != len(self.names):
            raise NameMismatch("duplicate feature names")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise NameMismatch(f"no feature named {name!r}") from None

    def with_column(self, name: str, column: np.ndarray) -> "FeatureMatrix":
        col = np.asarray(column, dtype=np.float64).reshape(-1, 1)
        if col.shape[0] != self.n_rows:
            raise NameMismatch(f"column length {col.shape[0]} != {self.n_rows} rows")
        return FeatureMatrix(self.names + [name], np.hstack([self.values, col]), self.row_keys)


@dataclass
class ScalerParams:
    """Per-feature mean/std fitted on training rows, plus any winsor caps."""

    names: list[str]
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray                   # bool flags where std == 0
    caps: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "names": self.names,
                "mean": self.mean.tolist(),
                "std": self.std.tolist(),
                "constant": self.constant.astype(int).tolist(),
                "caps": self.caps,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ScalerParams":
        obj = json.loads(text)
        return cls(
            names=list(obj["names"]),
            mean=np.asarray(obj["mean"], dtype=np.float64),
            std=np.asarray(obj["std"], dtype=np.float64),
            constant=np.asarray(obj["constant"], dtype=bool),
            caps={k: float(v) for k, v in obj.get("caps", {}).items()},
        )


def rolling_stats(series: Sequence[float], window: int) -> tuple[np.ndarray, np.ndarray]:
    """Trailing mean/std over the last ``window`` points, prefix warm-up.

    Position k aggregates the min(k + 1, window) most recent points, so the
    output aligns 1:1 with the input and never contains missing values.
    Population std (ddof 0): a 1-point window has std 0.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.size == 0:
        raise EmptySeries("rolling_stats needs a non-empty series")
    if window < 1:
        raise ZeroWindow(f"window must be >= 1, got {window}")
    n = x.size
    means = np.empty(n)
    stds = np.empty(n)
    warm = min(window - 1, n)
    for k in range(warm):
        chunk = x[:k + 1]
        means[k] = chunk.mean()
        stds[k] = chunk.std()
    if n >= window:
        full = np.lib.stride_tricks.sliding_window_view(x, window)
        mu = full.mean(axis=1)
        means[window - 1:] = mu
        stds[window - 1:] = np.sqrt(((full - mu[:, None]) ** 2).mean(axis=1))
    return means, stds


@dataclass
class ExpectedLoadCoeffs:
    """Linear expected-load model: load = a * temperature + b * moving_avg + c."""

    a: float
    b: float
    c: float


def fit_expected_load(
    temperature: np.ndarray, moving_avg: np.ndarray, consumption: np.ndarray
) -> ExpectedLoadCoeffs:
    """Least-squares fit of the linear expected-load model.

    Callers must pass rows known to be normal (label 0) from the training
    split only, otherwise theft contaminates the baseline.
    """
    tau = np.asarray(temperature, dtype=np.float64)
    mu = np.asarray(moving_avg, dtype=np.float64)
    y = np.asarray(consumption, dtype=np.float64)
    if y.size == 0:
        raise EmptySeries("cannot fit expected load on zero rows")
    design = np.column_stack([tau, mu, np.ones_like(tau)])
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    return ExpectedLoadCoeffs(float(coeffs[0]), float(coeffs[1]), float(coeffs[2]))


def expected_load(temperature, moving_avg, coeffs: ExpectedLoadCoeffs):
    """Evaluate the fitted expected-load model, clamped at zero."""
    if coeffs is None:
        raise UnfittedCoefficients("expected-load coefficients not fitted")
    tau = np.asarray(temperature, dtype=np.float64)
    mu = np.asarray(moving_avg, dtype=np.float64)
    out = np.maximum(coeffs.a * tau + coeffs.b * mu + coeffs.c, 0.0)
    return float(out) if out.ndim == 0 else out


def imbalance_index(observed, expected, eps: float = DEFAULT_EPSILON):
    """Absolute relative gap |(C - Chat) / (C + eps)| between metered and
    expected consumption.

    The eps keeps zero-consumption intervals (outages, zeroing tampering)
    finite; the resulting huge values are winsorized before scaling.
    """
    c = np.asarray(observed, dtype=np.float64)
    chat = np.asarray(expected, dtype=np.float64)
    out = np.abs((c - chat) / (c + eps))
    return float(out) if out.ndim == 0 else out


def voltage_drop_proxy(load, line_resistance: float):
    """Linear I*R-style proxy for feeder voltage drop at a given load."""
    x = np.asarray(load, dtype=np.float64)
    if np.any(x < 0):
        raise NegativeLoad("load must be nonnegative")
    out = line_resistance * x
    return float(out) if out.ndim == 0 else out


def winsor_cap(values: np.ndarray, percentile: float) -> float:
    """Cap for winsorization, taken from the given percentile of ``values``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise EmptySeries("cannot take a percentile of zero values")
    return float(np.percentile(v, percentile))


def fit_scaler(train: FeatureMatrix, caps: Optional[dict[str, float]] = None) -> ScalerParams:
    """Per-feature mean/std on training rows; zero-variance columns flagged."""
    if train.n_rows == 0:
        raise EmptyMatrix("cannot fit a scaler on zero rows")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    constant = std == 0.0
    return ScalerParams(list(train.names), mean, std, constant, dict(caps or {}))


def standardize(m: FeatureMatrix, s: ScalerParams) -> FeatureMatrix:
    """Center/scale to the fitted training statistics; constants map to 0."""
    if m.names != s.names:
        raise NameMismatch(
            f"feature names {m.names} do not match scaler names {s.names}"
        )
    safe_std = np.where(s.constant, 1.0, s.std)
    z = (m.values - s.mean) / safe_std
    z[:, s.constant] = 0.0
    return FeatureMatrix(list(m.names), z, m.row_keys)


def inverse_standardize(m: FeatureMatrix, s: ScalerParams) -> FeatureMatrix:
    if m.names != s.names:
        raise NameMismatch("feature names do not match scaler names")
    return FeatureMatrix(list(m.names), m.values * s.std + s.mean, m.row_keys)


def align_features(m: FeatureMatrix, expected_names: Sequence[str]) -> FeatureMatrix:
    """Reindex columns to ``expected_names``: missing columns become zeros,
    unexpected ones are dropped with a warning."""
    expected = list(expected_names)
    out = np.zeros((m.n_rows, len(expected)), dtype=np.float64)
    present = {name: i for i, name in enumerate(m.names)}
    for j, name in enumerate(expected):
        if name in present:
            out[:, j] = m.values[:, present[name]]
    extra = [name for name in m.names if name not in set(expected)]
    if extra:
        warnings.warn(
            f"align_features dropped {len(extra)} unexpected column(s): {extra}",
            stacklevel=2,
        )
    return FeatureMatrix(expected, out, m.row_keys)


@dataclass
class FeatureParams:
    """Knobs for engineered-feature construction."""

    rolling_windows: list[int] = field(default_factory=lambda: [8, 24])
    epsilon: float = DEFAULT_EPSILON
    winsor_percentile: float = 99.9
    line_resistance: float = 0.01
    min_fit_rows: int = 3      # below this, a state falls back to the global fit


@dataclass
class EngineeredFeatures:
    """Raw (pre-scaling) feature matrix plus everything needed to rebuild it."""

    matrix: FeatureMatrix
    coeffs_by_state: dict[str, ExpectedLoadCoeffs]
    global_coeffs: ExpectedLoadCoeffs
    imbalance_cap: float


def build_features(
    d: Dataset, params: FeatureParams, fit_mask: np.ndarray
) -> EngineeredFeatures:
    """Compute the engineered feature matrix for every record.

    Per-state computations (rolling stats, expected load) respect state
    boundaries; all fits (expected-load regressions, the winsor cap) use only
    rows where ``fit_mask`` is True and the label is 0 where labels exist.
    """
    n = len(d)
    fit_mask = np.asarray(fit_mask, dtype=bool)
    if fit_mask.shape != (n,):
        raise NameMismatch(f"fit_mask length {fit_mask.shape} != {n} records")
    normal = np.ones(n, dtype=bool) if d.labels is None else d.labels == 0
    fit_rows = fit_mask & normal

    windows = list(params.rolling_windows)
    if not windows:
        raise ZeroWindow("need at least one rolling window")
    mu_window = windows[0]

    roll_means = {w: np.empty(n) for w in windows}
    roll_stds = {w: np.empty(n) for w in windows}
    mu = np.empty(n)
    for sl in d.state_index.values():
        series = d.total[sl]
        for w in windows:
            m_w, s_w = rolling_stats(series, w)
            roll_means[w][sl] = m_w
            roll_stds[w][sl] = s_w
        mu[sl] = roll_means[mu_window][sl]

    global_coeffs = fit_expected_load(
        d.temperature[fit_rows], mu[fit_rows], d.total[fit_rows]
    )
    coeffs_by_state: dict[str, ExpectedLoadCoeffs] = {}
    chat = np.empty(n)
    for state, sl in d.state_index.items():
        rows = np.zeros(n, dtype=bool)
        rows[sl] = True
        rows &= fit_rows
        if rows.sum() >= params.min_fit_rows:
            coeffs = fit_expected_load(d.temperature[rows], mu[rows], d.total[rows])
        else:
            coeffs = global_coeffs
        coeffs_by_state[state] = coeffs
        chat[sl] = expected_load(d.temperature[sl], mu[sl], coeffs)

    delta = imbalance_index(d.total, chat, params.epsilon)
    cap = winsor_cap(delta[fit_mask], params.winsor_percentile)
    delta = np.minimum(delta, cap)
    vdrop = voltage_drop_proxy(d.total, params.line_resistance)

    names = ["residential", "commercial", "industrial", "total", "temperature"]
    cols = [d.residential, d.commercial, d.industrial, d.total, d.temperature]
    for w in windows:
        names += [f"roll_mean_{w}", f"roll_std_{w}"]
        cols += [roll_means[w], roll_stds[w]]
    names += ["expected_load", "imbalance_index", "voltage_drop"]
    cols += [chat, delta, vdrop]

    matrix = FeatureMatrix(names, np.column_stack(cols), d.row_keys())
    return EngineeredFeatures(matrix, coeffs_by_state, global_coeffs, cap)
