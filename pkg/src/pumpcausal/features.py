"""Time-series feature extraction over fixed daily windows.

Computes 23 named features per pump from a trailing window (default 90
days): 11 distributional statistics, 5 trend measures, and 7 variability
measures.  The default active set drops diff_mean, leaving the canonical
22-feature matrix.  All moments use population (1/T) divisors; quantiles
interpolate linearly between order statistics.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import csv

import numpy as np

from .data import CovariateSeries
from .errors import DataError

EPSILON = 1e-10

STATISTICAL_NAMES = (
    "mean", "std", "q25", "q50", "q75", "iqr", "min", "max",
    "skewness", "kurtosis", "cv",
)
TREND_NAMES = (
    "trend_slope_90d", "trend_intercept", "recent_vs_past_ratio",
    "recent_vs_past_diff", "recent_change_rate",
)
VARIABILITY_NAMES = (
    "diff_mean", "diff_abs_mean", "rolling_std_7d_mean",
    "rolling_std_14d_mean", "rolling_std_30d_mean",
    "max_drawdown", "mean_drawdown",
)
FEATURE_NAMES = STATISTICAL_NAMES + TREND_NAMES + VARIABILITY_NAMES

# diff_mean is excluded by default: 23 computed, 22 active
DEFAULT_ACTIVE_FEATURES = tuple(n for n in FEATURE_NAMES if n != "diff_mean")

ROLLING_WINDOWS = (7, 14, 30)
DEFAULT_WINDOW = 90


@dataclass(frozen=True, eq=False)
class WindowSeries:
    """A fixed-length daily window of one pump's measurements."""

    values: np.ndarray
    window: int = DEFAULT_WINDOW

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if len(values) != self.window:
            raise DataError(
                f"window has {len(values)} values, expected {self.window}"
            )
        if not np.all(np.isfinite(values)):
            raise DataError("non-finite value in window")


@dataclass(frozen=True)
class FeatureVector:
    """All 23 computed features for one window."""

    mean: float
    std: float
    q25: float
    q50: float
    q75: float
    iqr: float
    min: float
    max: float
    skewness: float
    kurtosis: float
    cv: float
    trend_slope_90d: float
    trend_intercept: float
    recent_vs_past_ratio: float
    recent_vs_past_diff: float
    recent_change_rate: float
    diff_mean: float
    diff_abs_mean: float
    rolling_std_7d_mean: float
    rolling_std_14d_mean: float
    rolling_std_30d_mean: float
    max_drawdown: float
    mean_drawdown: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _as_values(w) -> np.ndarray:
    if isinstance(w, WindowSeries):
        return w.values
    values = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("non-finite value in window")
    return values


def statistical_features(w) -> dict[str, float]:
    """Distributional statistics (11 values); population divisors throughout."""
    x = _as_values(w)
    if len(x) < 2:
        raise DataError("statistical features need a window of length >= 2")
    mu = float(x.mean())
    sigma = float(np.sqrt(np.mean((x - mu) ** 2)))
    q25, q50, q75 = (float(np.quantile(x, q)) for q in (0.25, 0.5, 0.75))
    if sigma > 0.0:
        z = (x - mu) / sigma
        skewness = float(np.mean(z**3))
        kurtosis = float(np.mean(z**4) - 3.0)
    else:
        skewness = 0.0
        kurtosis = 0.0
    return {
        "mean": mu,
        "std": sigma,
        "q25": q25,
        "q50": q50,
        "q75": q75,
        "iqr": q75 - q25,
        "min": float(x.min()),
        "max": float(x.max()),
        "skewness": skewness,
        "kurtosis": kurtosis,
        "cv": sigma / (abs(mu) + EPSILON),
    }


def trend_features(w) -> dict[str, float]:
    """Linear trend and recent-versus-past comparisons (5 values)."""
    x = _as_values(w)
    n = len(x)
    if n < 8:
        raise DataError("trend features need a window of length >= 8")
    t = np.arange(1.0, n + 1.0)
    t_bar = t.mean()
    mu = x.mean()
    slope = float(np.sum((t - t_bar) * (x - mu)) / np.sum((t - t_bar) ** 2))
    intercept = float(mu - slope * t_bar)
    third = n // 3
    past = float(x[:third].mean())
    recent = float(x[n - third :].mean())
    return {
        "trend_slope_90d": slope,
        "trend_intercept": intercept,
        "recent_vs_past_ratio": recent / (past + EPSILON),
        "recent_vs_past_diff": recent - past,
        "recent_change_rate": float((x[-1] - x[-8]) / 7.0),
    }


def variability_features(w) -> dict[str, float]:
    """First-difference, rolling-std, and drawdown measures (7 values)."""
    x = _as_values(w)
    n = len(x)
    if n < max(ROLLING_WINDOWS) + 1:
        raise DataError(
            f"variability features need a window of length >= {max(ROLLING_WINDOWS) + 1}"
        )
    diffs = np.diff(x)
    out = {
        "diff_mean": float(diffs.mean()),
        "diff_abs_mean": float(np.abs(diffs).mean()),
    }
    for width in ROLLING_WINDOWS:
        trailing = np.lib.stride_tricks.sliding_window_view(x, width)
        out[f"rolling_std_{width}d_mean"] = float(trailing.std(axis=1).mean())
    running_max = np.maximum.accumulate(x)
    drawdown = (running_max - x) / (running_max + EPSILON)
    out["max_drawdown"] = float(drawdown.max())
    out["mean_drawdown"] = float(drawdown.mean())
    return out


def compute_features(w) -> FeatureVector:
    """All 23 features for one window."""
    merged = statistical_features(w) | trend_features(w) | variability_features(w)
    return FeatureVector(**merged)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Active-set feature rows per pump, in stable pump order."""

    pump_ids: tuple[str, ...]
    feature_names: tuple[str, ...]
    values: np.ndarray  # (n_pumps, n_active)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (len(self.pump_ids), len(self.feature_names)):
            raise DataError("feature matrix shape does not match labels")

    @property
    def n_pumps(self) -> int:
        return len(self.pump_ids)

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def row(self, pump_id: str) -> np.ndarray:
        return self.values[self.pump_ids.index(pump_id)]


def extract_features(
    series: Iterable[CovariateSeries] | Mapping[str, np.ndarray],
    window_end: int,
    window: int = DEFAULT_WINDOW,
    active: Sequence[str] = DEFAULT_ACTIVE_FEATURES,
) -> FeatureMatrix:
    """Feature matrix from each pump's trailing window ending at ``window_end``.

    The window covers days [window_end - window + 1, window_end]; pumps with
    insufficient coverage are reported together in one error.
    """
    unknown = [name for name in active if name not in FEATURE_NAMES]
    if unknown:
        raise DataError(f"unknown feature names: {unknown}")
    if isinstance(series, Mapping):
        items = [(pid, 0, np.asarray(vals, float)) for pid, vals in series.items()]
    else:
        items = [(s.pump_id, s.start_day, s.values) for s in series]

    start_day = window_end - window + 1
    short: list[str] = []
    rows: list[np.ndarray] = []
    pump_ids: list[str] = []
    for pump_id, s_start, values in items:
        lo = start_day - s_start
        hi = window_end + 1 - s_start
        if lo < 0 or hi > len(values):
            short.append(pump_id)
            continue
        vec = compute_features(WindowSeries(values[lo:hi], window)).as_dict()
        rows.append(np.array([vec[name] for name in active]))
        pump_ids.append(pump_id)
    if short:
        raise DataError(
            f"series too short for window [{start_day}, {window_end}] on pumps: "
            + ", ".join(short)
        )
    stacked = np.stack(rows) if rows else np.empty((0, len(active)))
    return FeatureMatrix(tuple(pump_ids), tuple(active), stacked)


def write_features_csv(matrix: FeatureMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pump_id", *matrix.feature_names])
        for pump_id, row in zip(matrix.pump_ids, matrix.values):
            writer.writerow([pump_id, *[repr(float(v)) for v in row]])


def read_features_csv(path: str | Path) -> FeatureMatrix:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "pump_id":
            raise DataError(f"{path}: bad features header")
        names = tuple(header[1:])
        pump_ids = []
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path} line {line_no}: wrong field count")
            pump_ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError:
                raise DataError(f"{path} line {line_no}: non-numeric value") from None
    values = np.array(rows) if rows else np.empty((0, len(names)))
    return FeatureMatrix(tuple(pump_ids), names, values)
