import csv

import numpy as np
import pytest

from gridtheft.ingestion import load_csv

SCHEMA = {
    "state": "state",
    "time": "period",
    "residential": "res",
    "commercial": "com",
    "industrial": "ind",
    "total": "total",
    "temperature": "temp",
}

HEADER = ["state", "period", "res", "com", "ind", "total", "temp"]


def write_rows(path, rows, header=None):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header or HEADER)
        writer.writerows(rows)


def make_rows(state, n, seed=0, base=100.0):
    """Simple synthetic rows for one state: mild seasonality plus noise."""
    rng = np.random.default_rng(seed)
    rows = []
    for t in range(n):
        temp = 15 + 10 * np.sin(2 * np.pi * t / 26) + rng.normal(0, 1)
        res = base * (1 + 0.3 * abs(temp - 18) / 10) * (1 + rng.normal(0, 0.03))
        com = 0.8 * base * (1 + rng.normal(0, 0.03))
        ind = 0.6 * base * (1 + rng.normal(0, 0.02))
        rows.append([
            state, str(t), repr(round(float(res), 6)), repr(round(float(com), 6)),
            repr(round(float(ind), 6)), repr(round(float(res + com + ind), 6)),
            repr(round(float(temp), 4)),
        ])
    return rows


@pytest.fixture
def dataset_factory(tmp_path):
    """Build a loaded Dataset from per-state record counts."""

    def build(counts: dict[str, int], seed=0):
        rows = []
        for i, (state, n) in enumerate(counts.items()):
            rows.extend(make_rows(state, n, seed=seed + i))
        path = tmp_path / "data.csv"
        write_rows(path, rows)
        return load_csv(path, SCHEMA)

    return build
