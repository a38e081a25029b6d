"""Aggregation of run traces: geometric tail means and threshold profiles."""
from __future__ import annotations

import csv
import math
from typing import Iterable, Sequence

import numpy as np

MEASURE_FLOOR = 1e-300
MEASURES = ("geo_kkt_noisy", "geo_infeas_noisy", "geo_kkt_true", "geo_infeas_true")


def geometric_mean_tail(values: Sequence[float], window: int = 10, floor: float = MEASURE_FLOOR) -> float:
    """Geometric mean of the last ``min(window, len(values))`` entries.

    Entries are floored at ``floor`` so exact zeros keep the mean defined.
    """
    if len(values) == 0:
        raise ValueError("values must be nonempty")
    tail = np.asarray(values[-window:], dtype=float)
    if np.any(tail < 0):
        raise ValueError("values must be nonnegative")
    return float(np.exp(np.mean(np.log(np.maximum(tail, floor)))))


def profile(summaries: Iterable, measure: str, thresholds: Sequence[float]) -> list[tuple[float, float]]:
    """Percentage of runs whose ``measure`` is at most each threshold.

    ``summaries`` are :class:`RunSummary` objects or mappings.  Runs with a
    NaN measure count as not meeting any threshold.
    """
    if measure not in MEASURES:
        raise ValueError(f"unknown measure {measure!r}; expected one of {MEASURES}")
    vals = [s[measure] if isinstance(s, dict) else getattr(s, measure) for s in summaries]
    if not vals:
        raise ValueError("summaries must be nonempty")
    vals = np.asarray(vals, dtype=float)
    out = []
    for t in sorted(thresholds):
        out.append((float(t), 100.0 * float(np.count_nonzero(vals <= t)) / vals.size))
    return out


def write_profile_csv(rows, path, measure: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", f"percent_{measure}"])
        for t, p in rows:
            w.writerow([repr(t), repr(p)])


def default_thresholds(lo: int = -12, hi: int = 2) -> list[float]:
    return [10.0 ** e for e in range(lo, hi + 1)]


def is_finite(x) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)
