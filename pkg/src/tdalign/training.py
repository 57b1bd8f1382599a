"""Mini-batch training with Adam, early stopping and per-epoch learning curves."""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .losses import LossConfig, Mode, MetricsReport, combined_loss, metric_sums, sigmoid
from .models import ForecasterParams, _components, backward, forward
from .series import WindowSet

logger = logging.getLogger(__name__)

ALPHA_KEY = "alpha_logit"


class NumericalError(FloatingPointError):
    """A loss or gradient became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 32
    patience: int = 3
    seed: int = 0
    loss: LossConfig = LossConfig()
    shuffle: bool = True

    def __post_init__(self):
        if self.lr <= 0 or self.adam_eps <= 0:
            raise ValueError("lr and adam_eps must be > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("adam betas must lie in (0, 1)")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 0:
            raise ValueError("epochs >= 1, batch_size >= 1, patience >= 0 required")


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              config: TrainConfig) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient in {name!r} at step {state.t + 1}")
    state.t += 1
    b1, b2 = config.beta1, config.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[name] -= config.lr * (m / bc1) / (np.sqrt(v / bc2) + config.adam_eps)


@dataclass
class AlphaState:
    """Learnable mixing weight, alpha = sigmoid(logit); logit 0 gives alpha 0.5."""

    logit: np.ndarray = field(default_factory=lambda: np.zeros(()))

    @property
    def alpha(self) -> float:
        return float(sigmoid(float(self.logit)))


@dataclass
class EpochStats:
    loss_y: float
    loss_d: float
    rho: float
    total: float
    batch_totals: list[float]
    seconds: float


@dataclass
class TrainReport:
    train_ly: list[float] = field(default_factory=list)
    train_ld: list[float] = field(default_factory=list)
    train_rho: list[float] = field(default_factory=list)
    train_total: list[float] = field(default_factory=list)
    val_mse: list[float] = field(default_factory=list)
    val_mse_d: list[float] = field(default_factory=list)
    val_rho: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    alpha: list[float] = field(default_factory=list)

    COLUMNS = ("epoch", "train_ly", "train_ld", "train_rho", "train_total",
               "val_mse", "val_mse_d", "val_rho", "seconds")

    def __len__(self):
        return len(self.train_total)

    def rows(self):
        for i in range(len(self)):
            yield [i] + [getattr(self, c)[i] for c in self.COLUMNS[1:]]

    def to_csv(self, path=None, header: dict | None = None) -> str:
        """CSV text, one row per epoch; ``header`` entries become ``# key: value`` lines."""
        buf = io.StringIO()
        for k, v in (header or {}).items():
            buf.write(f"# {k}: {v}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.COLUMNS)
        for row in self.rows():
            writer.writerow([row[0]] + [repr(float(x)) for x in row[1:]])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def read_report_csv(path) -> tuple[dict[str, str], list[dict[str, float]]]:
    """Parse a TrainReport CSV into (header metadata, rows)."""
    path = Path(path)
    meta, lines = {}, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            lines.append(line)
    if not lines:
        raise ValueError(f"{path}: no CSV content")
    reader = csv.DictReader(lines)
    missing = set(TrainReport.COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"{path}: missing columns {sorted(missing)}")
    rows = []
    for lineno, rec in enumerate(reader, start=2):
        try:
            rows.append({k: float(rec[k]) for k in TrainReport.COLUMNS})
        except (TypeError, ValueError):
            raise ValueError(f"{path}: corrupt row {lineno}") from None
    return meta, rows


def _history(batch, config: LossConfig):
    return batch.inputs if config.diff.reach > 1 else batch.anchor


def batch_step(params: ForecasterParams, batch, config: TrainConfig, adam: AdamState,
               alpha: AlphaState | None = None, update: bool = True):
    """Forward, loss, backward and (optionally) an Adam update for one batch."""
    comps = _components(params, batch.inputs)
    pred = forward(params, batch.inputs, comps)
    a = alpha.alpha if (alpha is not None and config.loss.mode is Mode.LEARNABLE_ALPHA) else None
    report = combined_loss(batch.targets, pred, _history(batch, config.loss), config.loss, alpha=a)
    if not math.isfinite(report.total):
        raise NumericalError("non-finite loss")
    if update:
        grads = backward(params, batch.inputs, report.grad_wrt_prediction, comps)
        arrays = params.arrays
        if a is not None:
            grads[ALPHA_KEY] = np.asarray((report.loss_y - report.loss_d) * a * (1.0 - a))
            arrays = dict(params.arrays, **{ALPHA_KEY: alpha.logit})
        adam_step(arrays, grads, adam, config)
    return report


def epoch_order(n: int, config: TrainConfig, epoch: int) -> np.ndarray:
    """Batch order for one epoch; depends only on (seed, epoch), never on the loss mode."""
    if not config.shuffle:
        return np.arange(n)
    rng = np.random.default_rng([config.seed, 1, epoch])
    return rng.permutation(n)


def train_epoch(params: ForecasterParams, data: WindowSet, config: TrainConfig, adam: AdamState,
                alpha: AlphaState | None = None, epoch: int = 0) -> EpochStats:
    if not len(data):
        raise ValueError("no training windows")
    start = time.perf_counter()
    sums = np.zeros(4)
    totals = []
    order = epoch_order(len(data), config, epoch)
    for i, batch in enumerate(data.batches(config.batch_size, order)):
        try:
            rep = batch_step(params, batch, config, adam, alpha)
        except NumericalError as exc:
            raise NumericalError(f"epoch {epoch}, batch {i}: {exc}") from None
        sums += (rep.loss_y, rep.loss_d, rep.rho, rep.total)
        totals.append(rep.total)
    n = len(totals)
    return EpochStats(*(sums / n).tolist(), batch_totals=totals,
                      seconds=time.perf_counter() - start)


def evaluate(params: ForecasterParams, data: WindowSet, batch_size: int = 256) -> MetricsReport:
    """Metrics over all windows, each window weighted equally."""
    if not len(data):
        raise ValueError("no evaluation windows")
    sums = np.zeros(5)
    count = 0
    for batch in data.batches(batch_size):
        pred = forward(params, batch.inputs)
        sums += metric_sums(batch.targets, pred, batch.anchor)
        count += batch.targets.size
    return MetricsReport(*(sums / count).tolist())


def learnable_count(params: ForecasterParams, config: TrainConfig) -> int:
    """Trainable scalars: model parameters plus the logit in learnable-alpha mode."""
    n = int(sum(v.size for v in params.arrays.values()))
    return n + (1 if config.loss.mode is Mode.LEARNABLE_ALPHA else 0)


def fit(params: ForecasterParams, train: WindowSet, val: WindowSet, config: TrainConfig,
        log_every: bool = False) -> tuple[ForecasterParams, TrainReport]:
    """Train ``params`` in place; return a copy of the best-validation parameters.

    Stops once ``patience`` consecutive epochs fail to improve validation MSE
    (``patience=0`` stops at the first such epoch).
    """
    if not len(train) or not len(val):
        raise ValueError("fit needs non-empty train and validation windows")
    config.loss.diff.validate(params.horizon, params.lookback)
    adam = AdamState()
    alpha = AlphaState() if config.loss.mode is Mode.LEARNABLE_ALPHA else None
    report = TrainReport()
    best = params.copy()
    best_mse = math.inf
    bad = 0
    for epoch in range(config.epochs):
        stats = train_epoch(params, train, config, adam, alpha, epoch)
        vm = evaluate(params, val)
        report.train_ly.append(stats.loss_y)
        report.train_ld.append(stats.loss_d)
        report.train_rho.append(stats.rho)
        report.train_total.append(stats.total)
        report.val_mse.append(vm.mse)
        report.val_mse_d.append(vm.mse_d)
        report.val_rho.append(vm.rho)
        report.seconds.append(stats.seconds)
        if alpha is not None:
            report.alpha.append(alpha.alpha)
        (logger.info if log_every else logger.debug)(
            "epoch %d: total %.6f  L_Y %.6f  L_D %.6f  rho %.4f  val mse %.6f (%.2fs)",
            epoch, stats.total, stats.loss_y, stats.loss_d, stats.rho, vm.mse, stats.seconds)
        if vm.mse < best_mse:
            best_mse = vm.mse
            best = params.copy()
            report.best_epoch = epoch
            bad = 0
        else:
            bad += 1
            if bad >= max(config.patience, 1):
                break
    return best, report


def config_dict(config: TrainConfig) -> dict:
    out = {f.name: getattr(config, f.name) for f in fields(config) if f.name != "loss"}
    out.update(base=config.loss.base.value, mode=config.loss.mode.value, alpha=config.loss.alpha,
               tau=config.loss.diff.order, k=config.loss.diff.interval)
    return out
