"""Hybrid electricity-theft detection.

Temporal anomaly scoring (LSTM autoencoder), grid-aware node classification
(graph convolution over per-state temporal chains), tabular classification
(random forest), weighted score fusion, and F1-optimal threshold calibration,
wired into a deterministic batch pipeline.
"""

from . import artifacts, errors, synthetic
from .features import (
    FeatureMatrix,
    FeatureParams,
    ScalerParams,
    align_features,
    build_features,
    expected_load,
    fit_expected_load,
    fit_scaler,
    imbalance_index,
    rolling_stats,
    standardize,
    voltage_drop_proxy,
)
from .forest import Forest, ForestConfig, feature_importances, rf_predict_proba, train_forest
from .fusion import (
    CalibratedThreshold,
    FusionWeights,
    ScoreTriple,
    apply_flag,
    calibrate_threshold,
    hybrid_score,
    hybrid_scores,
)
from .gcn import GcnParams, GcnTrainConfig, gcn_forward, gcn_predict_proba, train_gcn, weighted_nll
from .graph import NormalizedAdjacency, TemporalGraph, build_temporal_graph, normalized_adjacency
from .ingestion import ConsumptionRecord, Dataset, load_csv, split_masks, split_train_test
from .labeling import AttackSpec, inject_theft
from .lstm_ae import (
    LstmAeConfig,
    LstmAeParams,
    SequenceWindow,
    anomaly_score,
    classify_by_threshold,
    make_windows,
    normalize_scores,
    train_autoencoder,
)
from .metrics import (
    ConfusionMatrix,
    ReportBundle,
    classification_report,
    confusion,
    harmonic_f1,
    pr_curve,
    roc_auc,
)
from .pipeline import (
    PipelineConfig,
    RunManifest,
    emit_reports,
    run_pipeline,
    write_scored_dataset,
)

__version__ = "0.1.0"
