"""Synthetic sectoral consumption data for demos and end-to-end tests.

Each state gets its own scale, seasonal phase, and temperature profile.
Residential load couples strongly to heating/cooling demand, commercial
moderately, industrial barely; all three carry AR(1) noise. A small rate of
short benign dips (equipment failures, load transfers) keeps the series from
being trivially clean, so purely temporal detectors face realistic false
positives.
"""

from __future__ import annotations

import csv

import numpy as np

# 48 contiguous-US style state codes for realistic-looking output
STATE_CODES = [
    "AL", "AZ", "AR", "CA", "CO", "CT", "DE", "FL", "GA", "ID", "IL", "IN",
    "IA", "KS", "KY", "LA", "ME", "MD", "MA", "MI", "MN", "MS", "MO", "MT",
    "NE", "NV", "NH", "NJ", "NM", "NY", "NC", "ND", "OH", "OK", "OR", "PA",
    "RI", "SC", "SD", "TN", "TX", "UT", "VT", "VA", "WA", "WV", "WI", "WY",
]

COLUMNS = [
    "state", "period", "residential_mwh", "commercial_mwh", "industrial_mwh",
    "total_mwh", "avg_temperature", "region_code", "population_index",
]

DEFAULT_SCHEMA = {
    "state": "state",
    "time": "period",
    "residential": "residential_mwh",
    "commercial": "commercial_mwh",
    "industrial": "industrial_mwh",
    "total": "total_mwh",
    "temperature": "avg_temperature",
}


def generate_consumption(
    n_states: int = 48,
    n_periods: int = 420,
    seed: int = 0,
    benign_dip_rate: float = 0.012,
) -> tuple[list[str], list[list[str]]]:
    """Rows of weekly-style sectoral consumption, one series per state.

    Returns (header, rows) with every cell already a string; callers write
    straight to CSV or feed the loader through an in-memory file.
    """
    rng = np.random.default_rng(seed)
    states = STATE_CODES[:n_states]
    if n_states > len(STATE_CODES):
        states = states + [f"S{i:02d}" for i in range(n_states - len(STATE_CODES))]
    rows: list[list[str]] = []
    t = np.arange(n_periods)
    for si, state in enumerate(states):
        scale = float(rng.lognormal(mean=7.0, sigma=0.6))
        phase = float(rng.uniform(0, 2 * np.pi))
        base_temp = float(rng.uniform(8.0, 20.0))
        temp = (
            base_temp
            + 11.0 * np.sin(2 * np.pi * t / 52.0 + phase)
            + rng.normal(0, 1.6, n_periods)
        )
        discomfort = np.abs(temp - 18.0) / 10.0

        def sector(weight: float, coupling: float, rho: float = 0.7) -> np.ndarray:
            noise = np.empty(n_periods)
            noise[0] = rng.normal(0, 0.05)
            eps = rng.normal(0, 0.04, n_periods)
            for k in range(1, n_periods):
                noise[k] = rho * noise[k - 1] + eps[k]
            level = weight * scale * (1.0 + coupling * discomfort) * (1.0 + noise)
            return np.maximum(level, 0.0)

        res = sector(0.42, 0.55)
        com = sector(0.33, 0.30)
        ind = sector(0.25, 0.08, rho=0.85)

        # short benign dips: legitimate volatility that is not theft
        n_dips = rng.binomial(n_periods, benign_dip_rate)
        for _ in range(n_dips):
            start = int(rng.integers(0, n_periods))
            length = int(rng.integers(1, 4))
            factor = rng.uniform(0.55, 0.85)
            sl = slice(start, min(start + length, n_periods))
            res[sl] *= factor
            com[sl] *= factor

        total = res + com + ind
        region = str(si % 4)
        pop = repr(round(float(rng.uniform(0.2, 9.5)), 3))
        for k in range(n_periods):
            rows.append([
                state,
                str(k),
                repr(round(float(res[k]), 6)),
                repr(round(float(com[k]), 6)),
                repr(round(float(ind[k]), 6)),
                repr(round(float(total[k]), 6)),
                repr(round(float(temp[k]), 4)),
                region,
                pop,
            ])
    return list(COLUMNS), rows


def write_consumption_csv(path, n_states: int = 48, n_periods: int = 420, seed: int = 0) -> None:
    header, rows = generate_consumption(n_states, n_periods, seed)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
