"""Versioned binary artifact container for trained model parameters.

Layout: 4-byte magic, uint32 format version, uint64 header length, UTF-8
JSON header, then the raw array payloads concatenated in header order. Every
payload element is 64-bit little-endian (float64 or int64), so artifacts are
inspectable with nothing more than the header and an offset.
"""

from __future__ import annotations

import json
import struct
from typing import Any

import numpy as np

from .errors import DataError, IoFailure
from .forest import DecisionTree, Forest, ForestConfig
from .gcn import GcnParams
from .lstm_ae import LstmAeParams

MAGIC = b"GTAF"
FORMAT_VERSION = 1

_DTYPES = {"f8": "<f8", "i8": "<i8"}


def save_artifact(path, kind: str, meta: dict[str, Any], arrays: dict[str, np.ndarray]) -> None:
    entries = []
    payloads = []
    for name, arr in arrays.items():
        a = np.asarray(arr)
        code = "i8" if np.issubdtype(a.dtype, np.integer) else "f8"
        a = a.astype(_DTYPES[code])
        entries.append({"name": name, "dtype": code, "shape": list(a.shape)})
        payloads.append(np.ascontiguousarray(a).tobytes())
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": entries}, sort_keys=True
    ).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<I", FORMAT_VERSION))
            fh.write(struct.pack("<Q", len(header)))
            fh.write(header)
            for blob in payloads:
                fh.write(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write artifact {path}: {exc}") from exc


def load_artifact(path) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read artifact {path}: {exc}") from exc
    if blob[:4] != MAGIC:
        raise DataError(f"{path} is not an artifact file (bad magic)")
    version = struct.unpack("<I", blob[4:8])[0]
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported artifact version {version}")
    hlen = struct.unpack("<Q", blob[8:16])[0]
    header = json.loads(blob[16:16 + hlen].decode("utf-8"))
    offset = 16 + hlen
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        dt = np.dtype(_DTYPES[entry["dtype"]])
        nbytes = count * dt.itemsize
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype=dt).reshape(shape)
        arrays[entry["name"]] = arr.copy()
        offset += nbytes
    return header["kind"], header["meta"], arrays


# --- model-specific wrappers -------------------------------------------------

def save_lstm(params: LstmAeParams, path) -> None:
    meta = {
        "window": params.window,
        "input_dim": params.input_dim,
        "hidden": params.hidden,
        "latent": params.latent,
        "seed": params.seed,
        "score_min": params.score_min,
        "score_max": params.score_max,
    }
    arrays = dict(params.as_dict())
    arrays["loss_history"] = np.asarray(params.loss_history, dtype=np.float64)
    save_artifact(path, "lstm_ae", meta, arrays)


def load_lstm(path) -> LstmAeParams:
    kind, meta, arrays = load_artifact(path)
    if kind != "lstm_ae":
        raise DataError(f"expected lstm_ae artifact, found {kind}")
    return LstmAeParams(
        wx_e=arrays["wx_e"], wh_e=arrays["wh_e"], b_e=arrays["b_e"],
        wz=arrays["wz"], bz=arrays["bz"],
        wx_d=arrays["wx_d"], wh_d=arrays["wh_d"], b_d=arrays["b_d"],
        wo=arrays["wo"], bo=arrays["bo"],
        window=int(meta["window"]), input_dim=int(meta["input_dim"]),
        hidden=int(meta["hidden"]), latent=int(meta["latent"]),
        seed=int(meta["seed"]),
        score_min=float(meta["score_min"]), score_max=float(meta["score_max"]),
        loss_history=list(arrays.get("loss_history", np.empty(0))),
    )


def save_gcn(params: GcnParams, path, meta: dict | None = None) -> None:
    info = dict(meta or {})
    info["use_bias"] = bool(params.use_bias)
    save_artifact(path, "gcn", info, params.as_dict())


def load_gcn(path) -> GcnParams:
    kind, meta, arrays = load_artifact(path)
    if kind != "gcn":
        raise DataError(f"expected gcn artifact, found {kind}")
    return GcnParams(
        w0=arrays["w0"], b0=arrays["b0"], w1=arrays["w1"], b1=arrays["b1"],
        use_bias=bool(meta.get("use_bias", True)),
    )


def save_forest(forest: Forest, path) -> None:
    """Trees are concatenated node-wise; per-tree offsets restore boundaries."""
    offsets = np.cumsum([0] + [t.n_nodes for t in forest.trees]).astype(np.int64)
    arrays = {
        "tree_offsets": offsets,
        "feature": np.concatenate([t.feature for t in forest.trees]).astype(np.int64),
        "threshold": np.concatenate([t.threshold for t in forest.trees]),
        "left": np.concatenate([t.left for t in forest.trees]).astype(np.int64),
        "right": np.concatenate([t.right for t in forest.trees]).astype(np.int64),
        "counts": np.concatenate([t.counts for t in forest.trees]),
        "importances": forest.importances if forest.importances is not None else np.empty(0),
    }
    meta = {
        "feature_names": forest.feature_names,
        "seed": forest.seed,
        "n_trees": forest.n_trees,
        "config": {
            "n_trees": forest.config.n_trees,
            "max_features": forest.config.max_features,
            "min_samples_leaf": forest.config.min_samples_leaf,
            "bootstrap": forest.config.bootstrap,
            "seed": forest.config.seed,
        },
    }
    save_artifact(path, "forest", meta, arrays)


def load_forest(path) -> Forest:
    kind, meta, arrays = load_artifact(path)
    if kind != "forest":
        raise DataError(f"expected forest artifact, found {kind}")
    offsets = arrays["tree_offsets"]
    trees = []
    for i in range(len(offsets) - 1):
        lo, hi = int(offsets[i]), int(offsets[i + 1])
        trees.append(
            DecisionTree(
                feature=arrays["feature"][lo:hi].astype(np.int32),
                threshold=arrays["threshold"][lo:hi],
                left=arrays["left"][lo:hi].astype(np.int32),
                right=arrays["right"][lo:hi].astype(np.int32),
                counts=arrays["counts"][lo:hi],
            )
        )
    cfg = meta["config"]
    return Forest(
        trees=trees,
        feature_names=list(meta["feature_names"]),
        seed=int(meta["seed"]),
        config=ForestConfig(
            n_trees=int(cfg["n_trees"]),
            max_features=cfg["max_features"],
            min_samples_leaf=int(cfg["min_samples_leaf"]),
            bootstrap=bool(cfg["bootstrap"]),
            seed=int(cfg["seed"]),
        ),
        importances=arrays["importances"] if arrays["importances"].size else None,
    )
