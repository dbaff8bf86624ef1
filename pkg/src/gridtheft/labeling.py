"""Synthetic theft injection.

Ground-truth labels come from mutating normal consumption with the canonical
false-data-injection families: sustained reductions, zeroing, random
down-scaling, intermittent cuts, mean shifts, and time reversal. Attacks hit
contiguous spans so windowed models can observe them, and the mutation never
raises a span's aggregate consumption above the original.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, RateOutOfRange, UnknownKind
from .ingestion import CONSUMPTION_FIELDS, Dataset

ATTACK_KINDS = (
    "PartialReduction",
    "Zeroing",
    "RandomScale",
    "IntermittentCut",
    "MeanShiftDown",
    "TimeReversal",
)


@dataclass
class AttackSpec:
    """What to inject: attack family, prevalence, span geometry, and seed.

    kind "Mixed" draws one of the six families uniformly per span.
    """

    kind: str = "Mixed"
    rate: float = 0.07
    seed: int = 0
    span_range: tuple[int, int] = (8, 24)
    reduction_range: tuple[float, float] = (0.1, 0.8)
    scale_range: tuple[float, float] = (0.1, 1.0)
    cut_probability: float = 0.5
    shift_range: tuple[float, float] = (0.3, 0.8)

    def validate(self) -> None:
        if not 0.0 <= self.rate <= 1.0:
            raise RateOutOfRange(f"rate must be in [0, 1], got {self.rate}")
        if self.kind != "Mixed" and self.kind not in ATTACK_KINDS:
            raise UnknownKind(f"unknown attack kind {self.kind!r}")
        for lo, hi in (self.reduction_range, self.scale_range):
            if not (0.0 < lo <= hi <= 1.0):
                raise RateOutOfRange(f"factor range ({lo}, {hi}) must sit in (0, 1]")


@dataclass
class InjectedSpan:
    """Audit record for one injected theft episode."""

    kind: str
    state_id: str
    start: int          # global record index of the first mutated record
    length: int
    indices: list[int] = field(default_factory=list)


def _mutate_span(arrays: list[np.ndarray], lo: int, hi: int, kind: str, spec: "AttackSpec", rng) -> None:
    span = slice(lo, hi)
    length = hi - lo
    if kind == "PartialReduction":
        f = rng.uniform(*spec.reduction_range)
        for a in arrays:
            a[span] *= f
    elif kind == "Zeroing":
        for a in arrays:
            a[span] = 0.0
    elif kind == "RandomScale":
        factors = rng.uniform(*spec.scale_range, size=length)
        for a in arrays:
            a[span] *= factors
    elif kind == "IntermittentCut":
        cut = rng.random(length) < spec.cut_probability
        if not cut.any():
            cut[0] = True
        for a in arrays:
            a[span] = np.where(cut, 0.0, a[span])
    elif kind == "MeanShiftDown":
        shift = rng.uniform(*spec.shift_range)
        for a in arrays:
            a[span] = np.maximum(a[span] - shift * a[span].mean(), 0.0)
    elif kind == "TimeReversal":
        for a in arrays:
            a[span] = a[span][::-1]
    else:
        raise UnknownKind(f"unknown attack kind {kind!r}")


def inject_theft(d: Dataset, spec: AttackSpec) -> tuple[Dataset, list[InjectedSpan]]:
    """Label exactly floor(rate * N) records as theft, mutating their
    consumption in contiguous per-state spans.

    Deterministic under the spec seed. Returns the labeled dataset and the
    audit list of injected spans; the input dataset is left untouched.
    """
    spec.validate()
    if d.labels is not None and d.labels.any():
        raise DataError("dataset already carries theft labels")

    out = d.copy()
    n = len(out)
    labels = np.zeros(n, dtype=np.int64)
    quota = int(np.floor(spec.rate * n + 1e-9))
    rng = np.random.default_rng(spec.seed)
    arrays = [getattr(out, f) for f in CONSUMPTION_FIELDS]
    spans: list[InjectedSpan] = []
    states = list(out.state_index.items())

    def pick_kind() -> str:
        if spec.kind == "Mixed":
            return ATTACK_KINDS[int(rng.integers(len(ATTACK_KINDS)))]
        return spec.kind

    attempts = 0
    lo_len, hi_len = spec.span_range
    while quota > 0 and attempts < 10_000:
        state, sl = states[int(rng.integers(len(states)))]
        k = sl.stop - sl.start
        length = min(int(rng.integers(lo_len, hi_len + 1)), quota, k)
        start = sl.start + int(rng.integers(0, k - length + 1))
        if labels[start:start + length].any():
            attempts += 1
            continue
        kind = pick_kind()
        _mutate_span(arrays, start, start + length, kind, spec, rng)
        labels[start:start + length] = 1
        spans.append(InjectedSpan(kind, state, start, length, list(range(start, start + length))))
        quota -= length

    if quota > 0:
        # dense datasets can leave no room for fresh spans; finish the quota
        # with single-record mutations on the remaining normal records
        free = np.flatnonzero(labels == 0)
        chosen = rng.permutation(free)[:quota]
        for idx in np.sort(chosen):
            kind = pick_kind()
            _mutate_span(arrays, int(idx), int(idx) + 1, kind, spec, rng)
            labels[idx] = 1
            state = str(out.state_ids[idx])
            spans.append(InjectedSpan(kind, state, int(idx), 1, [int(idx)]))

    out.labels = labels
    _sync_raw_rows(out)
    return out, spans


def _sync_raw_rows(d: Dataset) -> None:
    """Push mutated consumption values (and labels, if mapped) back into the
    raw string rows so serialized output reflects what the models saw."""
    header_pos = {name: i for i, name in enumerate(d.header)}
    cols = {
        f: header_pos[d.schema[f]]
        for f in CONSUMPTION_FIELDS
        if f in d.schema and d.schema[f] in header_pos
    }
    label_col = None
    if "label" in d.schema and d.schema["label"] in header_pos:
        label_col = header_pos[d.schema["label"]]
    theft_rows = np.flatnonzero(d.labels == 1)
    for i in theft_rows:
        row = list(d.raw_rows[i])
        for f, c in cols.items():
            row[c] = repr(float(getattr(d, f)[i]))
        if label_col is not None:
            row[label_col] = "1"
        d.raw_rows[i] = row
