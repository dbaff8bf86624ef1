"""CSV ingestion: state-grouped, time-sorted consumption records and
chronological train/test splitting.

The loader keeps the original header and raw cell strings so a dataset can be
re-serialized bit-exactly and so scored output can carry every input column
through untouched.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    EmptyFile,
    FractionOutOfRange,
    MissingColumn,
    NonNumericCell,
    StateTooSmall,
)

# canonical field -> meaning; schema maps these onto actual CSV column names
REQUIRED_FIELDS = (
    "state",
    "time",
    "residential",
    "commercial",
    "industrial",
    "total",
    "temperature",
)

CONSUMPTION_FIELDS = ("residential", "commercial", "industrial", "total")


@dataclass
class ConsumptionRecord:
    """One state/time row of sectoral consumption."""

    state_id: str
    t: int
    residential: float
    commercial: float
    industrial: float
    total: float
    temperature: float
    label: Optional[int] = None


@dataclass
class Dataset:
    """Time-sorted, state-grouped consumption records.

    Numeric columns live in parallel numpy arrays; ``raw_rows`` preserves the
    original cells (in sorted order) for lossless re-serialization.
    ``state_index`` maps each state id to a contiguous, time-sorted slice.
    """

    header: list[str]
    raw_rows: list[list[str]]
    schema: dict[str, str]
    state_ids: np.ndarray          # object array of state codes
    t: np.ndarray                  # dense integer time index per state
    residential: np.ndarray
    commercial: np.ndarray
    industrial: np.ndarray
    total: np.ndarray
    temperature: np.ndarray
    labels: Optional[np.ndarray] = None
    state_index: dict[str, slice] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def states(self) -> list[str]:
        return list(self.state_index.keys())

    def record(self, i: int) -> ConsumptionRecord:
        return ConsumptionRecord(
            state_id=str(self.state_ids[i]),
            t=int(self.t[i]),
            residential=float(self.residential[i]),
            commercial=float(self.commercial[i]),
            industrial=float(self.industrial[i]),
            total=float(self.total[i]),
            temperature=float(self.temperature[i]),
            label=None if self.labels is None else int(self.labels[i]),
        )

    def row_keys(self) -> list[tuple[str, int]]:
        return [(str(s), int(t)) for s, t in zip(self.state_ids, self.t)]

    def copy(self) -> "Dataset":
        return Dataset(
            header=list(self.header),
            raw_rows=[list(r) for r in self.raw_rows],
            schema=dict(self.schema),
            state_ids=self.state_ids.copy(),
            t=self.t.copy(),
            residential=self.residential.copy(),
            commercial=self.commercial.copy(),
            industrial=self.industrial.copy(),
            total=self.total.copy(),
            temperature=self.temperature.copy(),
            labels=None if self.labels is None else self.labels.copy(),
            state_index=dict(self.state_index),
        )

    def subset(self, indices: np.ndarray) -> "Dataset":
        """New Dataset restricted to ``indices`` (must stay state-grouped)."""
        idx = np.asarray(indices, dtype=np.int64)
        sub = Dataset(
            header=list(self.header),
            raw_rows=[self.raw_rows[i] for i in idx],
            schema=dict(self.schema),
            state_ids=self.state_ids[idx],
            t=self.t[idx],
            residential=self.residential[idx],
            commercial=self.commercial[idx],
            industrial=self.industrial[idx],
            total=self.total[idx],
            temperature=self.temperature[idx],
            labels=None if self.labels is None else self.labels[idx],
        )
        sub.state_index = _group_consecutive(sub.state_ids)
        return sub

    def to_csv(self, path, delimiter: str = ",") -> None:
        """Re-serialize using the original raw cells (bit-exact round trip)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, delimiter=delimiter)
            writer.writerow(self.header)
            writer.writerows(self.raw_rows)


def _group_consecutive(state_ids: np.ndarray) -> dict[str, slice]:
    index: dict[str, slice] = {}
    n = len(state_ids)
    start = 0
    for i in range(1, n + 1):
        if i == n or state_ids[i] != state_ids[start]:
            index[str(state_ids[start])] = slice(start, i)
            start = i
    return index


def load_csv(path, schema: dict[str, str], delimiter: str = ",") -> Dataset:
    """Load a consumption CSV into a time-sorted, state-grouped Dataset.

    ``schema`` maps the canonical field names (state, time, residential,
    commercial, industrial, total, temperature, optionally label) to the
    column names used in the file. Unmapped columns are carried through
    opaquely. The time column only orders records; it is replaced by a dense
    per-state integer index.
    """
    for fieldname in REQUIRED_FIELDS:
        if fieldname not in schema:
            raise MissingColumn(fieldname)

    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyFile(f"no header row in {path}") from None
        rows = [row for row in reader if row]

    if not rows:
        raise EmptyFile(f"no data rows in {path}")

    col_of: dict[str, int] = {}
    for fieldname, colname in schema.items():
        if colname not in header:
            raise MissingColumn(colname)
        col_of[fieldname] = header.index(colname)

    n = len(rows)
    states = [row[col_of["state"]] for row in rows]

    def parse_column(fieldname: str) -> np.ndarray:
        c = col_of[fieldname]
        out = np.empty(n, dtype=np.float64)
        for r, row in enumerate(rows):
            try:
                v = float(row[c])
            except (ValueError, IndexError):
                cell = row[c] if c < len(row) else None
                raise NonNumericCell(r + 1, schema[fieldname], cell) from None
            if not math.isfinite(v):
                raise NonNumericCell(r + 1, schema[fieldname], row[c])
            out[r] = v
        return out

    t_raw = parse_column("time")
    columns = {f: parse_column(f) for f in CONSUMPTION_FIELDS}
    for fieldname in CONSUMPTION_FIELDS:
        bad = np.flatnonzero(columns[fieldname] < 0)
        if bad.size:
            r = int(bad[0])
            raise NonNumericCell(r + 1, schema[fieldname], rows[r][col_of[fieldname]])
    temperature = parse_column("temperature")

    labels = None
    if "label" in schema:
        raw_labels = parse_column("label")
        if not np.isin(raw_labels, (0.0, 1.0)).all():
            r = int(np.flatnonzero(~np.isin(raw_labels, (0.0, 1.0)))[0])
            raise NonNumericCell(r + 1, schema["label"], rows[r][col_of["label"]])
        labels = raw_labels.astype(np.int64)

    # stable sort by (state, raw time); ties keep file order
    order = sorted(range(n), key=lambda i: (states[i], t_raw[i]))
    order = np.asarray(order, dtype=np.int64)

    ds = Dataset(
        header=header,
        raw_rows=[rows[i] for i in order],
        schema=dict(schema),
        state_ids=np.asarray(states, dtype=object)[order],
        t=np.zeros(n, dtype=np.int64),
        residential=columns["residential"][order],
        commercial=columns["commercial"][order],
        industrial=columns["industrial"][order],
        total=columns["total"][order],
        temperature=temperature[order],
        labels=None if labels is None else labels[order],
    )
    ds.state_index = _group_consecutive(ds.state_ids)
    for sl in ds.state_index.values():
        ds.t[sl] = np.arange(sl.stop - sl.start)
    return ds


def _test_counts(n: int, test_fraction: float) -> int:
    """Test-set size for one state: the train side takes the ceiling.

    The epsilon absorbs float noise so e.g. 0.3 * 10 lands on 3, not 2.
    """
    return int(math.floor(test_fraction * n + 1e-9))


def split_train_test(d: Dataset, test_fraction: float) -> tuple[Dataset, Dataset]:
    """Chronological split: the latest records of every state go to test.

    Deterministic and random-free; rolling features computed downstream then
    never leak future information into the training side.
    """
    if not 0.0 < test_fraction < 1.0:
        raise FractionOutOfRange(f"test_fraction must be in (0, 1), got {test_fraction}")
    train_idx: list[int] = []
    test_idx: list[int] = []
    for state, sl in d.state_index.items():
        k = sl.stop - sl.start
        if k < 2:
            raise StateTooSmall(state, k)
        n_test = _test_counts(k, test_fraction)
        cut = sl.stop - n_test
        train_idx.extend(range(sl.start, cut))
        test_idx.extend(range(cut, sl.stop))
    return d.subset(np.asarray(train_idx)), d.subset(np.asarray(test_idx))


def split_masks(
    d: Dataset, test_fraction: float, calibration_fraction: float = 0.0
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean (train, calibration, test) masks over the full dataset.

    Test records are each state's chronological tail (same rule as
    ``split_train_test``); the calibration slice is the tail of the remaining
    training portion and is held out of all model fitting.
    """
    if not 0.0 < test_fraction < 1.0:
        raise FractionOutOfRange(f"test_fraction must be in (0, 1), got {test_fraction}")
    if not 0.0 <= calibration_fraction < 1.0:
        raise FractionOutOfRange(
            f"calibration_fraction must be in [0, 1), got {calibration_fraction}"
        )
    n = len(d)
    train = np.zeros(n, dtype=bool)
    calib = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    for state, sl in d.state_index.items():
        k = sl.stop - sl.start
        if k < 2:
            raise StateTooSmall(state, k)
        n_test = _test_counts(k, test_fraction)
        cut = sl.stop - n_test
        test[cut:sl.stop] = True
        n_train = cut - sl.start
        n_calib = math.ceil(calibration_fraction * n_train - 1e-9) if calibration_fraction else 0
        calib[cut - n_calib:cut] = True
        train[sl.start:cut - n_calib] = True
    return train, calib, test
