"""Series data model, CSV ingestion, splitting, scaling, windowing and generators."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

logger = logging.getLogger(__name__)

STD_FLOOR = 1e-8


class SeriesError(ValueError):
    """Raised for malformed series input or impossible split/window requests."""


@dataclass(frozen=True)
class SeriesMatrix:
    """A T x N panel of observations, row = time step, column = variable."""

    values: np.ndarray
    names: tuple[str, ...] = ()
    granularity: str | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise SeriesError(f"expected a non-empty T x N matrix, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise SeriesError("series contains non-finite values")
        values.setflags(write=False)
        names = tuple(self.names) or tuple(f"x{j}" for j in range(values.shape[1]))
        if len(names) != values.shape[1]:
            raise SeriesError(f"{len(names)} names for {values.shape[1]} columns")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def T(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray) -> "SeriesMatrix":
        return SeriesMatrix(values, self.names, self.granularity)

    def rows(self, start: int, stop: int) -> "SeriesMatrix":
        return self.with_values(self.values[start:stop])


@dataclass(frozen=True)
class SplitSpec:
    ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)

    def __post_init__(self):
        r = tuple(float(v) for v in self.ratios)
        if len(r) != 3:
            raise SeriesError("split ratios must be (train, val, test)")
        if any(v < 0 for v in r) or r[0] <= 0:
            raise SeriesError(f"invalid split ratios {r}: train must be > 0, all >= 0")
        if abs(sum(r) - 1.0) > 1e-9:
            raise SeriesError(f"split ratios {r} do not sum to 1")
        object.__setattr__(self, "ratios", r)


@dataclass(frozen=True)
class Split:
    """Train/val/test partitions.

    ``val`` and ``test`` carry ``context`` rows of left context borrowed from
    the preceding split; only rows after that context are forecast targets.
    """

    train: SeriesMatrix
    val: SeriesMatrix | None
    test: SeriesMatrix | None
    context: int
    borders: tuple[int, int, int] = field(default=(0, 0, 0))


def _check_date_order(path, dates):
    try:
        stamps = [(lineno, datetime.fromisoformat(text)) for lineno, text in dates]
    except ValueError:
        warnings.warn(f"{path}: date column is not ISO formatted; ordering not checked", stacklevel=3)
        return
    for (_, prev), (lineno, cur) in zip(stamps, stamps[1:]):
        if cur <= prev:
            raise SeriesError(f"{path}: date at line {lineno} does not increase ({cur} after {prev})")


def load_csv(path, date_column: str | None = "date") -> SeriesMatrix:
    """Read a comma-separated file with a header row into a SeriesMatrix.

    The date column, when present, is dropped (it is never a feature); if its
    values parse as ISO timestamps they must be strictly increasing.
    Non-numeric cells raise ``SeriesError`` naming the row and column.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SeriesError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        keep = [j for j, h in enumerate(header) if not (date_column and h == date_column)]
        if not keep:
            raise SeriesError(f"{path}: no numeric columns")
        date_j = header.index(date_column) if date_column in header else None
        rows, dates = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise SeriesError(f"{path}: line {lineno} has {len(row)} fields, expected {len(header)}")
            parsed = []
            for j in keep:
                cell = row[j].strip()
                try:
                    v = float(cell)
                except ValueError:
                    raise SeriesError(
                        f"{path}: non-numeric cell {cell!r} at line {lineno}, column {header[j]!r}"
                    ) from None
                if not math.isfinite(v):
                    raise SeriesError(f"{path}: non-finite cell at line {lineno}, column {header[j]!r}")
                parsed.append(v)
            rows.append(parsed)
            if date_j is not None:
                dates.append((lineno, row[date_j].strip()))
    if len(rows) < 2:
        raise SeriesError(f"{path}: need at least 2 data rows, got {len(rows)}")
    _check_date_order(path, dates)
    return SeriesMatrix(np.asarray(rows, dtype=np.float64), tuple(header[j] for j in keep))


def save_csv(series: SeriesMatrix, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.names)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])


def split_borders(T: int, spec: SplitSpec) -> tuple[int, int]:
    """Row indices (t1, t2) ending the train and val target regions."""
    r_train, r_val, r_test = spec.ratios
    # tolerance guards ratios like 0.29 * 100 = 28.999999999999996
    t1 = int(math.floor(r_train * T + 1e-9))
    t2 = t1 + int(math.floor(r_val * T + 1e-9))
    if r_test == 0:
        t2 = T
        if r_val == 0:
            t1 = T
    return t1, t2


def chronological_split(series: SeriesMatrix, spec: SplitSpec, lookback: int) -> Split:
    """Split rows chronologically; val/test get ``lookback`` rows of left context."""
    if lookback < 1:
        raise SeriesError("lookback must be >= 1")
    T = series.T
    t1, t2 = split_borders(T, spec)
    _, r_val, r_test = spec.ratios
    if t1 <= 0:
        raise SeriesError(f"train split is empty (T={T}, ratios={spec.ratios})")
    if r_val > 0 and t2 <= t1:
        raise SeriesError(f"validation split is empty (T={T}, ratios={spec.ratios})")
    if r_test > 0 and T <= t2:
        raise SeriesError(f"test split is empty (T={T}, ratios={spec.ratios})")
    val = test = None
    if r_val > 0:
        if lookback > t1:
            raise SeriesError(f"lookback {lookback} exceeds train length {t1}")
        val = series.rows(t1 - lookback, t2)
    if r_test > 0:
        if lookback > t2:
            raise SeriesError(f"lookback {lookback} exceeds preceding length {t2}")
        test = series.rows(t2 - lookback, T)
    return Split(series.rows(0, t1), val, test, lookback, (t1, t2, T))


@dataclass(frozen=True)
class ZScoreScaler:
    mean: np.ndarray
    std: np.ndarray

    def transform(self, series: SeriesMatrix) -> SeriesMatrix:
        return series.with_values((series.values - self.mean) / self.std)

    def inverse_transform(self, series: SeriesMatrix) -> SeriesMatrix:
        return series.with_values(series.values * self.std + self.mean)


def fit_scaler(train: SeriesMatrix) -> ZScoreScaler:
    """Column-wise mean and population std, std floored at ``STD_FLOOR``."""
    if train.T < 2:
        raise SeriesError("need at least 2 rows to fit a scaler")
    mean = train.values.mean(axis=0)
    std = train.values.std(axis=0)
    std = np.maximum(std, STD_FLOOR)
    return ZScoreScaler(mean, std)


def transform(scaler: ZScoreScaler, series: SeriesMatrix) -> SeriesMatrix:
    return scaler.transform(series)


def inverse_transform(scaler: ZScoreScaler, series: SeriesMatrix) -> SeriesMatrix:
    return scaler.inverse_transform(series)


@dataclass(frozen=True)
class WindowBatch:
    inputs: np.ndarray  # B x L x N
    anchor: np.ndarray  # B x N, == inputs[:, -1]
    targets: np.ndarray  # B x H x N

    def __len__(self):
        return self.inputs.shape[0]


class WindowSet:
    """Lazily gathered sliding windows over one series.

    Windows start at ``0, stride, 2*stride, ...``; nothing is materialised
    until a batch is requested, so long horizons stay cheap in memory.
    """

    def __init__(self, values: np.ndarray, lookback: int, horizon: int, stride: int = 1):
        if lookback < 1 or horizon < 1 or stride < 1:
            raise SeriesError("lookback, horizon and stride must be >= 1")
        self.values = np.ascontiguousarray(values, dtype=np.float64)
        self.lookback = lookback
        self.horizon = horizon
        self.stride = stride
        T = self.values.shape[0]
        span = lookback + horizon
        self.count = (T - span) // stride + 1 if T >= span else 0
        if self.count:
            # (T - span + 1, N, span) view; no copy
            self._view = sliding_window_view(self.values, span, axis=0)

    def __len__(self):
        return self.count

    @property
    def starts(self) -> np.ndarray:
        return np.arange(self.count) * self.stride

    def batch(self, index=None) -> WindowBatch:
        idx = np.arange(self.count) if index is None else np.asarray(index)
        win = self._view[idx * self.stride].transpose(0, 2, 1)  # B x span x N
        inputs = np.ascontiguousarray(win[:, : self.lookback])
        targets = np.ascontiguousarray(win[:, self.lookback :])
        return WindowBatch(inputs, inputs[:, -1].copy(), targets)

    def batches(self, batch_size: int, order=None):
        order = np.arange(self.count) if order is None else order
        for lo in range(0, self.count, batch_size):
            yield self.batch(order[lo : lo + batch_size])


def make_windows(series: SeriesMatrix, lookback: int, horizon: int, stride: int = 1,
                 strict: bool = False) -> WindowSet:
    """Sliding windows over ``series``; count = floor((T - L - H) / stride) + 1."""
    ws = WindowSet(series.values, lookback, horizon, stride)
    if not len(ws):
        msg = f"series of length {series.T} too short for lookback {lookback} + horizon {horizon}"
        if strict:
            raise SeriesError(msg)
        warnings.warn(msg, stacklevel=2)
    return ws


def inject_gaussian_noise(series: SeriesMatrix, variance: float, seed) -> SeriesMatrix:
    if variance < 0:
        raise SeriesError(f"noise variance must be >= 0, got {variance}")
    if variance == 0:
        return series.with_values(series.values)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, math.sqrt(variance), size=series.values.shape)
    return series.with_values(series.values + noise)


def gen_ar1(phi: float, sigma: float, T: int, N: int = 1, seed=0) -> SeriesMatrix:
    """AR(1) per column: x_t = phi * x_{t-1} + eta_t, x_0 = 0."""
    if not abs(phi) < 1:
        raise SeriesError(f"AR(1) requires |phi| < 1, got {phi}")
    if sigma <= 0:
        raise SeriesError("sigma must be > 0")
    rng = np.random.default_rng(seed)
    eta = rng.normal(0.0, sigma, size=(T, N))
    x = np.zeros((T, N))
    for t in range(1, T):
        x[t] = phi * x[t - 1] + eta[t]
    return SeriesMatrix(x, granularity="synthetic")


def gen_sine_mix(periods: Sequence[float], amplitudes: Sequence[float], noise: float,
                 T: int, N: int = 1, seed=0) -> SeriesMatrix:
    """Sum of sinusoids with a random phase per column and component, plus white noise."""
    if len(periods) != len(amplitudes):
        raise SeriesError("periods and amplitudes must have equal length")
    if noise < 0 or any(p <= 0 for p in periods):
        raise SeriesError("periods must be > 0 and noise >= 0")
    rng = np.random.default_rng(seed)
    t = np.arange(T)[:, None]
    phases = rng.uniform(0.0, 2 * np.pi, size=(len(periods), N))
    x = np.zeros((T, N))
    for (p, a), ph in zip(zip(periods, amplitudes), phases):
        x += a * np.sin(2 * np.pi * t / p + ph)
    x += rng.normal(0.0, noise, size=(T, N)) if noise > 0 else 0.0
    return SeriesMatrix(x, granularity="synthetic")


def gen_random_walk(sigma: float, T: int, N: int = 1, seed=0) -> SeriesMatrix:
    if sigma < 0:
        raise SeriesError("sigma must be >= 0")
    if sigma == 0:
        return SeriesMatrix(np.zeros((T, N)), granularity="synthetic")
    rng = np.random.default_rng(seed)
    return SeriesMatrix(np.cumsum(rng.normal(0.0, sigma, size=(T, N)), axis=0),
                        granularity="synthetic")
