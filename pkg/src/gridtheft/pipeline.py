"""Batch pipeline: ingest, inject labels, engineer features, score with the
autoencoder, build the graph, train the graph classifier and the forest,
fuse, calibrate, and evaluate.

Single-config, single-seed design: every stage draws its randomness from a
named sub-seed of the master seed, so equal configs give byte-equal outputs.
Every stage snapshot lands in the cache directory, which is what the
``--stage`` resume flag replays from.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import pickle
import time
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from . import artifacts
from .errors import ConfigError, DataError, GridTheftError, SingleClassLabels
from .features import (
    EngineeredFeatures,
    FeatureMatrix,
    FeatureParams,
    ScalerParams,
    align_features,
    build_features,
    fit_scaler,
    standardize,
)
from .forest import Forest, ForestConfig, feature_importances, rf_predict_proba, train_forest
from .fusion import CalibratedThreshold, FusionWeights, apply_flag, calibrate_threshold, hybrid_scores
from .gcn import GcnParams, GcnTrainConfig, gcn_predict_proba, train_gcn
from .graph import NormalizedAdjacency, TemporalGraph, build_temporal_graph, normalized_adjacency
from .ingestion import Dataset, load_csv, split_masks
from .labeling import AttackSpec, InjectedSpan, inject_theft
from .lstm_ae import (
    LstmAeConfig,
    LstmAeParams,
    classify_by_threshold,
    make_windows,
    normalize_scores,
    per_record_scores,
    score_windows,
    stack_windows,
    train_autoencoder,
)
from .metrics import ReportBundle, evaluate_scores, roc_curve_points

STAGES = ("ingest", "label", "features", "lstm", "graph", "gcn", "forest", "fuse", "evaluate")

SCORE_COLUMNS = [
    "GNN_Prob-Theft",
    "Supervised_prob_Theft",
    "TS_Anomaly_Scored_Scaled",
    "Hybrid_Theft_Score",
    "Hybrid_Theft_Flag",
]


def derive_seed(master: int, label: str) -> int:
    """Stable named sub-seed of the master seed."""
    digest = hashlib.sha256(f"{master}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass
class PipelineConfig:
    input_path: str
    schema: dict[str, str]
    seed: int
    output_dir: str = "out"
    delimiter: str = ","
    test_fraction: float = 0.3
    calibration_fraction: float = 0.2
    attack: AttackSpec = field(default_factory=AttackSpec)
    features: FeatureParams = field(default_factory=FeatureParams)
    lstm: LstmAeConfig = field(default_factory=LstmAeConfig)
    lstm_train_stride: int = 1
    lstm_threshold_percentile: float = 95.0
    gcn: GcnTrainConfig = field(default_factory=GcnTrainConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    fusion: FusionWeights = field(default_factory=FusionWeights)

    def validate(self) -> None:
        if not isinstance(self.seed, int):
            raise ConfigError("config must pin an integer master seed")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction {self.test_fraction} outside (0, 1)")
        if not 0.0 <= self.calibration_fraction < 1.0:
            raise ConfigError(
                f"calibration_fraction {self.calibration_fraction} outside [0, 1)"
            )
        if self.lstm_train_stride < 1:
            raise ConfigError("lstm_train_stride must be >= 1")
        self.attack.validate()
        # FusionWeights already enforces nonnegativity and the unit sum

    def canonical_dict(self) -> dict[str, Any]:
        """Everything that affects results; output location excluded."""
        return {
            "input_path": self.input_path,
            "schema": dict(sorted(self.schema.items())),
            "seed": self.seed,
            "delimiter": self.delimiter,
            "test_fraction": self.test_fraction,
            "calibration_fraction": self.calibration_fraction,
            "attack": {
                "kind": self.attack.kind,
                "rate": self.attack.rate,
                "span_range": list(self.attack.span_range),
                "reduction_range": list(self.attack.reduction_range),
                "scale_range": list(self.attack.scale_range),
                "cut_probability": self.attack.cut_probability,
                "shift_range": list(self.attack.shift_range),
            },
            "features": {
                "rolling_windows": list(self.features.rolling_windows),
                "epsilon": self.features.epsilon,
                "winsor_percentile": self.features.winsor_percentile,
                "line_resistance": self.features.line_resistance,
            },
            "lstm": {
                "window": self.lstm.window,
                "hidden": self.lstm.hidden,
                "latent": self.lstm.latent,
                "epochs": self.lstm.epochs,
                "lr": self.lstm.lr,
                "min_improvement": self.lstm.min_improvement,
                "train_stride": self.lstm_train_stride,
                "threshold_percentile": self.lstm_threshold_percentile,
            },
            "gcn": {
                "hidden": self.gcn.hidden,
                "lr": self.gcn.lr,
                "weight_decay": self.gcn.weight_decay,
                "epochs": self.gcn.epochs,
                "dropout": self.gcn.dropout,
                "class_weights": None if self.gcn.class_weights is None else list(self.gcn.class_weights),
                "use_bias": self.gcn.use_bias,
            },
            "forest": {
                "n_trees": self.forest.n_trees,
                "max_features": self.forest.max_features,
                "min_samples_leaf": self.forest.min_samples_leaf,
                "bootstrap": self.forest.bootstrap,
            },
            "fusion": [self.fusion.alpha, self.fusion.beta, self.fusion.gamma],
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    @classmethod
    def from_dict(cls, obj: dict[str, Any], base_dir: str = ".") -> "PipelineConfig":
        known = {
            "input", "output_dir", "schema", "seed", "delimiter", "test_fraction",
            "calibration_fraction", "attack", "features", "lstm", "gcn", "forest",
            "fusion",
        }
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            input_path = obj["input"]
            schema = dict(obj["schema"])
            seed = obj["seed"]
        except KeyError as exc:
            raise ConfigError(f"config missing required key: {exc}") from None
        if not isinstance(seed, int):
            raise ConfigError("seed must be an integer (no implicit entropy)")

        def section(name: str) -> dict:
            value = obj.get(name, {})
            if not isinstance(value, dict):
                raise ConfigError(f"config section {name!r} must be a table")
            return dict(value)

        atk = section("attack")
        attack = AttackSpec(
            kind=atk.pop("kind", "Mixed"),
            rate=atk.pop("rate", 0.07),
            span_range=tuple(atk.pop("span_range", (8, 24))),
            reduction_range=tuple(atk.pop("reduction_range", (0.1, 0.8))),
            scale_range=tuple(atk.pop("scale_range", (0.1, 1.0))),
            cut_probability=atk.pop("cut_probability", 0.5),
            shift_range=tuple(atk.pop("shift_range", (0.3, 0.8))),
        )
        if atk:
            raise ConfigError(f"unknown attack keys: {sorted(atk)}")

        feat = section("features")
        features = FeatureParams(
            rolling_windows=list(feat.pop("rolling_windows", [8, 24])),
            epsilon=feat.pop("epsilon", 1e-5),
            winsor_percentile=feat.pop("winsor_percentile", 99.9),
            line_resistance=feat.pop("line_resistance", 0.01),
        )
        if feat:
            raise ConfigError(f"unknown features keys: {sorted(feat)}")

        ls = section("lstm")
        stride = int(ls.pop("train_stride", 1))
        percentile = float(ls.pop("threshold_percentile", 95.0))
        lstm = LstmAeConfig(
            window=int(ls.pop("window", 24)),
            hidden=int(ls.pop("hidden", 32)),
            latent=int(ls.pop("latent", 8)),
            epochs=int(ls.pop("epochs", 100)),
            lr=float(ls.pop("lr", 1e-3)),
            min_improvement=float(ls.pop("min_improvement", 1e-6)),
            chunk=int(ls.pop("chunk", 1024)),
        )
        if ls:
            raise ConfigError(f"unknown lstm keys: {sorted(ls)}")

        gc = section("gcn")
        weights = gc.pop("class_weights", None)
        gcn_cfg = GcnTrainConfig(
            hidden=int(gc.pop("hidden", 128)),
            lr=float(gc.pop("lr", 0.01)),
            weight_decay=float(gc.pop("weight_decay", 5e-4)),
            epochs=int(gc.pop("epochs", 60)),
            dropout=float(gc.pop("dropout", 0.2)),
            class_weights=None if weights is None else tuple(weights),
            use_bias=bool(gc.pop("use_bias", True)),
        )
        if gc:
            raise ConfigError(f"unknown gcn keys: {sorted(gc)}")

        fo = section("forest")
        forest_cfg = ForestConfig(
            n_trees=int(fo.pop("n_trees", 100)),
            max_features=fo.pop("max_features", "sqrt"),
            min_samples_leaf=int(fo.pop("min_samples_leaf", 1)),
            bootstrap=bool(fo.pop("bootstrap", True)),
        )
        if fo:
            raise ConfigError(f"unknown forest keys: {sorted(fo)}")

        fu = section("fusion")
        fusion = FusionWeights(
            alpha=float(fu.pop("alpha", 0.4)),
            beta=float(fu.pop("beta", 0.4)),
            gamma=float(fu.pop("gamma", 0.2)),
        )
        if fu:
            raise ConfigError(f"unknown fusion keys: {sorted(fu)}")

        cfg = cls(
            input_path=os.path.join(base_dir, input_path) if not os.path.isabs(input_path) else input_path,
            schema=schema,
            seed=seed,
            output_dir=obj.get("output_dir", "out"),
            delimiter=obj.get("delimiter", ","),
            test_fraction=float(obj.get("test_fraction", 0.3)),
            calibration_fraction=float(obj.get("calibration_fraction", 0.2)),
            attack=attack,
            features=features,
            lstm=lstm,
            lstm_train_stride=stride,
            lstm_threshold_percentile=percentile,
            gcn=gcn_cfg,
            forest=forest_cfg,
            fusion=fusion,
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                obj = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(obj, base_dir=os.path.dirname(os.path.abspath(path)))


@dataclass
class RunManifest:
    config_hash: str
    stage_checksums: dict[str, str]
    artifact_paths: dict[str, str]
    tau_star: float
    headline_metrics: dict[str, float]
    files: dict[str, str]

    def to_json(self) -> str:
        return json.dumps(
            {
                "config_hash": self.config_hash,
                "stage_checksums": self.stage_checksums,
                "artifact_paths": self.artifact_paths,
                "tau_star": self.tau_star,
                "headline_metrics": self.headline_metrics,
                "files": self.files,
            },
            indent=2,
            sort_keys=True,
        )


@dataclass
class ModelEvaluation:
    """Scores and decisions of one model on the evaluation split."""

    scores: np.ndarray
    y_true: np.ndarray
    y_pred: np.ndarray
    bundle: ReportBundle


@dataclass
class PipelineState:
    """Everything handed between stages; snapshot after each stage is the
    resume point for that stage's successor."""

    cfg: PipelineConfig
    ds: Optional[Dataset] = None
    train_mask: Optional[np.ndarray] = None
    calib_mask: Optional[np.ndarray] = None
    test_mask: Optional[np.ndarray] = None
    spans: Optional[list[InjectedSpan]] = None
    engineered: Optional[EngineeredFeatures] = None
    lstm_params: Optional[LstmAeParams] = None
    s_norm: Optional[np.ndarray] = None
    ts_threshold: float = 0.0
    scaler: Optional[ScalerParams] = None
    std_matrix: Optional[FeatureMatrix] = None
    graph: Optional[TemporalGraph] = None
    adj: Optional[NormalizedAdjacency] = None
    gcn_params: Optional[GcnParams] = None
    gcn_history: Optional[list[float]] = None
    p_gnn: Optional[np.ndarray] = None
    forest: Optional[Forest] = None
    p_rf: Optional[np.ndarray] = None
    hybrid: Optional[np.ndarray] = None
    threshold: Optional[CalibratedThreshold] = None
    flags: Optional[np.ndarray] = None
    evaluations: Optional[dict[str, ModelEvaluation]] = None


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        elif isinstance(part, (bytes, bytearray)):
            h.update(part)
        else:
            h.update(repr(part).encode())
    return h.hexdigest()


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_csv(path, header: list[str], rows) -> None:
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _matrix_rows(m: FeatureMatrix, mask: np.ndarray) -> FeatureMatrix:
    keys = [k for k, keep in zip(m.row_keys, mask) if keep]
    return FeatureMatrix(list(m.names), m.values[mask], keys)


# --- stage implementations ---------------------------------------------------

def _stage_ingest(st: PipelineState) -> None:
    cfg = st.cfg
    st.ds = load_csv(cfg.input_path, cfg.schema, cfg.delimiter)
    st.train_mask, st.calib_mask, st.test_mask = split_masks(
        st.ds, cfg.test_fraction, cfg.calibration_fraction
    )


def _stage_label(st: PipelineState, out: "_OutputTracker") -> None:
    spec = replace(st.cfg.attack, seed=derive_seed(st.cfg.seed, "label"))
    st.ds, st.spans = inject_theft(st.ds, spec)
    rows = [
        [span.kind, span.state_id, str(span.start), str(span.length)]
        + [" ".join(str(i) for i in span.indices)]
        for span in st.spans
    ]
    out.write_csv("injected_spans.csv", ["kind", "state", "start", "length", "indices"], rows)


def _stage_features(st: PipelineState) -> None:
    st.engineered = build_features(st.ds, st.cfg.features, st.train_mask)


def _stage_lstm(st: PipelineState, out: "_OutputTracker") -> None:
    cfg = st.cfg
    m = st.engineered.matrix
    total = m.column("total")
    train_vals = total[st.train_mask]
    mu = float(train_vals.mean())
    sigma = float(train_vals.std())
    if sigma == 0.0:
        sigma = 1.0
    series = (total - mu) / sigma

    lstm_cfg = replace(cfg.lstm, seed=derive_seed(cfg.seed, "lstm"))
    window = lstm_cfg.window
    normal_train = st.train_mask & (st.ds.labels == 0)
    train_windows = []
    for state, sl in st.ds.state_index.items():
        flags = normal_train[sl]
        seq = series[sl]
        start = None
        for i in range(len(flags) + 1):
            inside = i < len(flags) and flags[i]
            if inside and start is None:
                start = i
            elif not inside and start is not None:
                if i - start >= window:
                    train_windows.extend(
                        make_windows(seq[start:i], window, cfg.lstm_train_stride, state)
                    )
                start = None
    st.lstm_params = train_autoencoder(train_windows, lstm_cfg)

    raw = np.full(len(st.ds), np.nan)
    for sl in st.ds.state_index.values():
        raw[sl] = per_record_scores(st.lstm_params, series[sl])
    s_norm = np.zeros(len(st.ds))
    covered = ~np.isnan(raw)
    s_norm[covered] = normalize_scores(
        raw[covered], st.lstm_params.score_min, st.lstm_params.score_max
    )
    st.s_norm = s_norm

    train_scores = score_windows(st.lstm_params, stack_windows(train_windows))
    norm_train = normalize_scores(
        train_scores, st.lstm_params.score_min, st.lstm_params.score_max
    )
    st.ts_threshold = float(np.percentile(norm_train, cfg.lstm_threshold_percentile))

    full = m.with_column("ts_anomaly_score", s_norm)
    st.scaler = fit_scaler(
        _matrix_rows(full, st.train_mask),
        caps={"imbalance_index": st.engineered.imbalance_cap},
    )
    aligned = align_features(full, st.scaler.names)
    st.std_matrix = standardize(aligned, st.scaler)

    out.write_bytes("artifacts/scaler.json", st.scaler.to_json().encode())
    out.save_artifact("artifacts/lstm_ae.bin", artifacts.save_lstm, st.lstm_params)


def _stage_graph(st: PipelineState, out: "_OutputTracker") -> None:
    st.graph = build_temporal_graph(st.ds, st.std_matrix, st.train_mask, st.test_mask)
    st.adj = normalized_adjacency(st.graph)
    out.write_csv(
        "graph/edges.csv",
        ["src", "dst"],
        [[str(int(a)), str(int(b))] for a, b in st.graph.edges],
    )
    out.write_csv(
        "graph/node_features.csv",
        ["state", "t", "label"] + list(st.std_matrix.names),
        [
            [k[0], str(k[1]), str(int(y))] + [_fmt(v) for v in row]
            for k, y, row in zip(st.std_matrix.row_keys, st.graph.y, st.std_matrix.values)
        ],
    )


def _stage_gcn(st: PipelineState, out: "_OutputTracker") -> None:
    gcn_cfg = replace(st.cfg.gcn, seed=derive_seed(st.cfg.seed, "gcn"))
    st.gcn_params, st.gcn_history = train_gcn(st.graph, st.adj, gcn_cfg)
    st.p_gnn = gcn_predict_proba(st.graph, st.adj, st.gcn_params)
    out.save_artifact(
        "artifacts/gcn.bin",
        lambda p, path: artifacts.save_gcn(p, path, meta={"hidden": gcn_cfg.hidden}),
        st.gcn_params,
    )


def _stage_forest(st: PipelineState, out: "_OutputTracker") -> None:
    forest_cfg = replace(st.cfg.forest, seed=derive_seed(st.cfg.seed, "forest"))
    aligned = align_features(st.std_matrix, st.scaler.names)
    train_matrix = _matrix_rows(aligned, st.train_mask)
    st.forest = train_forest(train_matrix, st.ds.labels[st.train_mask], forest_cfg)
    st.p_rf = rf_predict_proba(st.forest, aligned)
    out.save_artifact("artifacts/forest.bin", artifacts.save_forest, st.forest)


def _stage_fuse(st: PipelineState) -> None:
    cfg = st.cfg
    st.hybrid = hybrid_scores(st.p_gnn, st.p_rf, st.s_norm, cfg.fusion)
    calib = st.calib_mask
    labels = st.ds.labels
    # a degenerate calibration slice (one class only) falls back to the
    # training rows rather than aborting the run
    if not (labels[calib].any() and (labels[calib] == 0).any()):
        calib = calib | st.train_mask
    st.threshold = calibrate_threshold(st.hybrid[calib], labels[calib])
    st.flags = apply_flag(st.hybrid, st.threshold)


def _stage_evaluate(st: PipelineState, out: "_OutputTracker") -> None:
    test = st.test_mask
    y = st.ds.labels[test]
    evals: dict[str, ModelEvaluation] = {}

    def add(name, scores, pred):
        evals[name] = ModelEvaluation(
            scores=scores,
            y_true=y,
            y_pred=pred,
            bundle=evaluate_scores(scores, y, pred),
        )

    add("lstm", st.s_norm[test], classify_by_threshold(st.s_norm[test], st.ts_threshold))
    add("gcn", st.p_gnn[test], (st.p_gnn[test] >= 0.5).astype(np.int64))
    add("forest", st.p_rf[test], (st.p_rf[test] >= 0.5).astype(np.int64))
    add("hybrid", st.hybrid[test], st.flags[test])
    st.evaluations = evals

    emit_reports(
        evals,
        out,
        importances=feature_importances(st.forest),
        gcn_loss=st.gcn_history,
    )
    write_scored_dataset(
        st.ds,
        (st.p_gnn, st.p_rf, st.s_norm),
        st.hybrid,
        st.flags,
        out.path("scored.csv"),
    )
    out.register("scored.csv")


# --- output files ------------------------------------------------------------

class _OutputTracker:
    """Writes files under the output directory and remembers what it wrote,
    both for the manifest and for cleanup when a stage fails."""

    def __init__(self, root: str):
        self.root = root
        self.written: list[str] = []

    def path(self, rel: str) -> str:
        full = os.path.join(self.root, rel)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def register(self, rel: str) -> None:
        if rel not in self.written:
            self.written.append(rel)

    def write_csv(self, rel: str, header, rows) -> None:
        _write_csv(self.path(rel), header, rows)
        self.register(rel)

    def write_bytes(self, rel: str, blob: bytes) -> None:
        with open(self.path(rel), "wb") as fh:
            fh.write(blob)
        self.register(rel)

    def save_artifact(self, rel: str, saver, obj) -> None:
        saver(obj, self.path(rel))
        self.register(rel)

    def cleanup(self) -> None:
        for rel in self.written:
            try:
                os.unlink(os.path.join(self.root, rel))
            except OSError:
                pass

    def file_hashes(self) -> dict[str, str]:
        out = {}
        for rel in sorted(self.written):
            with open(os.path.join(self.root, rel), "rb") as fh:
                out[rel] = hashlib.sha256(fh.read()).hexdigest()
        return out


def write_scored_dataset(d: Dataset, triples, hybrid, flags, path) -> None:
    """Original input columns plus the five per-record score columns."""
    p_gnn, p_rf, s_norm = (np.asarray(a, dtype=np.float64) for a in triples)
    hybrid = np.asarray(hybrid, dtype=np.float64)
    flags = np.asarray(flags)
    n = len(d)
    for name, arr in (
        ("p_gnn", p_gnn), ("p_rf", p_rf), ("s_norm", s_norm),
        ("hybrid", hybrid), ("flags", flags),
    ):
        if len(arr) != n:
            raise DataError(f"{name} has {len(arr)} rows for {n} records")
    header = list(d.header) + SCORE_COLUMNS
    rows = [
        raw + [_fmt(p_gnn[i]), _fmt(p_rf[i]), _fmt(s_norm[i]), _fmt(hybrid[i]), _fmt(flags[i])]
        for i, raw in enumerate(d.raw_rows)
    ]
    _write_csv(path, header, rows)


def emit_reports(evals: dict[str, ModelEvaluation], out: _OutputTracker,
                 importances=None, gcn_loss=None) -> None:
    """One JSON report per model plus confusion, ROC, and PR CSVs, a loss
    curve, the feature importances, and a cross-model comparison table."""
    for name, ev in evals.items():
        out.write_bytes(f"reports/{name}_report.json", ev.bundle.to_json().encode())
        cm = ev.bundle.confusion
        out.write_csv(
            f"reports/{name}_confusion.csv",
            ["", "pred_normal", "pred_theft"],
            [["true_normal", str(cm.tn), str(cm.fp)], ["true_theft", str(cm.fn), str(cm.tp)]],
        )
        fpr, tpr, thr = roc_curve_points(ev.scores, ev.y_true)
        out.write_csv(
            f"curves/{name}_roc.csv",
            ["fpr", "tpr", "threshold"],
            [[_fmt(a), _fmt(b), _fmt(c)] for a, b, c in zip(fpr, tpr, thr)],
        )
        out.write_csv(
            f"curves/{name}_pr.csv",
            ["recall", "precision"],
            [[_fmt(r), _fmt(p)] for r, p in ev.bundle.pr_points],
        )
    out.write_csv(
        "reports/comparison.csv",
        ["model", "theft_f1", "accuracy"],
        [
            [name, _fmt(ev.bundle.report.theft.f1), _fmt(ev.bundle.report.accuracy)]
            for name, ev in evals.items()
        ],
    )
    if importances is not None:
        ranked = sorted(importances, key=lambda kv: -kv[1])
        out.write_csv(
            "reports/feature_importances.csv",
            ["feature", "importance"],
            [[name, _fmt(v)] for name, v in ranked],
        )
    if gcn_loss is not None:
        out.write_csv(
            "reports/gcn_loss.csv",
            ["epoch", "loss"],
            [[str(i + 1), _fmt(v)] for i, v in enumerate(gcn_loss)],
        )


# --- runner ------------------------------------------------------------------

def _stage_checksum(stage: str, st: PipelineState) -> str:
    if stage == "ingest":
        return _digest(st.ds.total, st.ds.t, tuple(st.ds.states), st.train_mask, st.test_mask)
    if stage == "label":
        return _digest(st.ds.labels, st.ds.total)
    if stage == "features":
        return _digest(st.engineered.matrix.values, st.engineered.imbalance_cap)
    if stage == "lstm":
        return _digest(st.s_norm, st.ts_threshold, *(st.lstm_params.as_dict().values()))
    if stage == "graph":
        return _digest(st.graph.edges, st.std_matrix.values)
    if stage == "gcn":
        return _digest(st.p_gnn, *(st.gcn_params.as_dict().values()))
    if stage == "forest":
        return _digest(st.p_rf, st.forest.importances)
    if stage == "fuse":
        return _digest(st.hybrid, st.threshold.tau, st.flags)
    if stage == "evaluate":
        return _digest(*(ev.bundle.to_json() for ev in st.evaluations.values()))
    raise ConfigError(f"unknown stage {stage!r}")


def run_pipeline(cfg: PipelineConfig, resume_from: Optional[str] = None) -> RunManifest:
    """Execute the full pipeline (or resume at a named stage) and write every
    declared output under cfg.output_dir.

    The manifest is deterministic for a given config; wall-clock timings go
    to a separate timings.json precisely so reruns stay byte-identical.
    """
    cfg.validate()
    root = cfg.output_dir
    os.makedirs(root, exist_ok=True)
    cache_dir = os.path.join(root, "cache")
    os.makedirs(cache_dir, exist_ok=True)
    out = _OutputTracker(root)

    start_idx = 0
    if resume_from is not None:
        if resume_from not in STAGES:
            raise ConfigError(f"unknown stage {resume_from!r}; expected one of {STAGES}")
        start_idx = STAGES.index(resume_from)

    checksums: dict[str, str] = {}
    if start_idx == 0:
        state = PipelineState(cfg=cfg)
    else:
        prev = STAGES[start_idx - 1]
        snap = os.path.join(cache_dir, f"after_{prev}.pkl")
        if not os.path.exists(snap):
            raise ConfigError(
                f"cannot resume from {resume_from!r}: no snapshot {snap}; run the full pipeline first"
            )
        with open(snap, "rb") as fh:
            state, prior_written = pickle.load(fh)
        if state.cfg.config_hash() != cfg.config_hash():
            raise ConfigError(
                "cached snapshot was produced by a different config; rerun without --stage"
            )
        state.cfg = cfg
        out.written = [
            rel for rel in prior_written if os.path.exists(os.path.join(root, rel))
        ]
        for stage in STAGES[:start_idx]:
            checksums[stage] = _stage_checksum(stage, state)

    runners = {
        "ingest": lambda: _stage_ingest(state),
        "label": lambda: _stage_label(state, out),
        "features": lambda: _stage_features(state),
        "lstm": lambda: _stage_lstm(state, out),
        "graph": lambda: _stage_graph(state, out),
        "gcn": lambda: _stage_gcn(state, out),
        "forest": lambda: _stage_forest(state, out),
        "fuse": lambda: _stage_fuse(state),
        "evaluate": lambda: _stage_evaluate(state, out),
    }

    timings: dict[str, float] = {}
    for stage in STAGES[start_idx:]:
        t0 = time.perf_counter()
        try:
            runners[stage]()
        except GridTheftError as exc:
            out.cleanup()
            exc.stage = stage
            exc.args = (f"stage {stage!r} failed: {exc}",)
            raise
        except Exception:
            out.cleanup()
            raise
        timings[stage] = time.perf_counter() - t0
        checksums[stage] = _stage_checksum(stage, state)
        with open(os.path.join(cache_dir, f"after_{stage}.pkl"), "wb") as fh:
            pickle.dump((state, list(out.written)), fh)

    hybrid_bundle = state.evaluations["hybrid"].bundle
    headline = {
        f"{name}_theft_f1": ev.bundle.report.theft.f1
        for name, ev in state.evaluations.items()
    }
    headline["hybrid_accuracy"] = hybrid_bundle.report.accuracy
    headline["hybrid_roc_auc"] = hybrid_bundle.roc_auc
    headline["hybrid_auprc"] = hybrid_bundle.auprc

    manifest = RunManifest(
        config_hash=cfg.config_hash(),
        stage_checksums=checksums,
        artifact_paths={
            "lstm_ae": "artifacts/lstm_ae.bin",
            "gcn": "artifacts/gcn.bin",
            "forest": "artifacts/forest.bin",
            "scaler": "artifacts/scaler.json",
        },
        tau_star=state.threshold.tau,
        headline_metrics=headline,
        files=out.file_hashes(),
    )
    tmp = os.path.join(root, "manifest.json.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(manifest.to_json())
    os.replace(tmp, os.path.join(root, "manifest.json"))
    with open(os.path.join(root, "timings.json"), "w", encoding="utf-8") as fh:
        json.dump({k: round(v, 4) for k, v in timings.items()}, fh, indent=2, sort_keys=True)
    return manifest
