"""Temporal-difference alignment losses, the sign-inconsistency weight and metrics.

Arrays follow the (batch, horizon, variable) layout.  Differences of the
target and of the prediction share one construction: both are anchored on
the true last input row(s), so a perfect prediction gives identical
difference sequences.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels


class Base(str, enum.Enum):
    MSE = "mse"
    MAE = "mae"


class Mode(str, enum.Enum):
    BASELINE = "baseline"  # L = L_Y
    PLUS_LD = "plus_ld"  # L = L_Y + L_D
    RHO_ONLY = "rho_only"  # L = rho * L_Y
    FIXED_ALPHA = "fixed_alpha"  # L = a * L_Y + (1 - a) * L_D
    LEARNABLE_ALPHA = "learnable_alpha"  # as above, a = sigmoid(logit) trained
    TDALIGN = "tdalign"  # L = rho * L_Y + (1 - rho) * L_D


# ablation settings in table order
ABLATION_MODES = (Mode.BASELINE, Mode.PLUS_LD, Mode.RHO_ONLY, Mode.LEARNABLE_ALPHA, Mode.TDALIGN)


@dataclass(frozen=True)
class DiffSpec:
    order: int = 1
    interval: int = 1

    def __post_init__(self):
        if int(self.order) < 1 or int(self.interval) < 1:
            raise ValueError(f"difference order and interval must be >= 1, got {self}")

    @property
    def reach(self) -> int:
        """Rows of true history needed before the first target step."""
        return self.order * self.interval

    @property
    def is_first(self) -> bool:
        return self.order == 1 and self.interval == 1

    def validate(self, horizon: int, lookback: int | None = None) -> None:
        if self.reach >= horizon:
            raise ValueError(f"order*interval={self.reach} must be below horizon {horizon}")
        if lookback is not None and self.reach > lookback:
            raise ValueError(f"order*interval={self.reach} exceeds lookback {lookback}")


@dataclass(frozen=True)
class LossConfig:
    base: Base = Base.MSE
    mode: Mode = Mode.TDALIGN
    alpha: float = 0.5
    diff: DiffSpec = DiffSpec()

    def __post_init__(self):
        object.__setattr__(self, "base", Base(self.base))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class LossReport:
    loss_y: float
    loss_d: float
    rho: float
    total: float
    grad_wrt_prediction: np.ndarray
    weight: float = float("nan")  # the mixing weight actually used (rho or alpha)


@dataclass
class MetricsReport:
    mse: float
    mae: float
    mse_d: float
    mae_d: float
    rho: float

    def as_dict(self) -> dict:
        return {"mse": self.mse, "mae": self.mae, "mse_d": self.mse_d,
                "mae_d": self.mae_d, "rho": self.rho}


METRIC_NAMES = ("mse", "mae", "mse_d", "mae_d", "rho")


def _check_same(a, b):
    if np.shape(a) != np.shape(b):
        raise ValueError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def _context(anchor, reach):
    """Normalise ``anchor`` (B x N or B x C x N) into B x reach x N history."""
    ctx = np.asarray(anchor, dtype=np.float64)
    if ctx.ndim == 2:
        ctx = ctx[:, None, :]
    if ctx.shape[1] < reach:
        raise ValueError(f"need {reach} rows of input history, got {ctx.shape[1]}")
    return ctx[:, ctx.shape[1] - reach:]


def difference(seq, anchor, spec: DiffSpec = DiffSpec()):
    """Apply the ``interval``-lag difference ``order`` times to history + ``seq``.

    ``anchor`` is the true last input row (B x N) or trailing input rows
    (B x C x N, C >= order*interval).  The output keeps the horizon length.
    """
    seq = np.asarray(seq, dtype=np.float64)
    ctx = _context(anchor, spec.reach)
    if ctx.shape[0] != seq.shape[0] or ctx.shape[2] != seq.shape[2]:
        raise ValueError(f"anchor shape {np.shape(anchor)} incompatible with {seq.shape}")
    z = np.concatenate([ctx, seq], axis=1)
    k = spec.interval
    for _ in range(spec.order):
        z = z[:, k:] - z[:, :-k]
    return z


def difference_adjoint(grad, spec: DiffSpec = DiffSpec()):
    """Transpose of ``difference`` w.r.t. ``seq`` (history held fixed)."""
    g = np.asarray(grad, dtype=np.float64)
    k = spec.interval
    for _ in range(spec.order):
        out = np.zeros(g.shape[:1] + (g.shape[1] + k,) + g.shape[2:])
        out[:, k:] += g
        out[:, :-k] -= g
        g = out
    return g[:, spec.reach:]


def tdt(Y, anchor, spec: DiffSpec = DiffSpec()):
    """Differences within the target."""
    return difference(Y, anchor, spec)


def tdp(Yhat, anchor, spec: DiffSpec = DiffSpec()):
    """Differences within the prediction; the first step is anchored on the true input."""
    return difference(Yhat, anchor, spec)


def _elementwise(base: Base, a, b):
    r = np.asarray(b, dtype=np.float64) - np.asarray(a, dtype=np.float64)
    return r * r if Base(base) is Base.MSE else np.abs(r)


def point_loss(Y, Yhat, base=Base.MSE) -> float:
    _check_same(Y, Yhat)
    return float(np.mean(_elementwise(base, Y, Yhat)))


def tdt_loss(D, Dhat, base=Base.MSE) -> float:
    _check_same(D, Dhat)
    return float(np.mean(_elementwise(base, D, Dhat)))


def rho(D, Dhat) -> float:
    """Share of entries whose true and predicted change directions disagree."""
    _check_same(D, Dhat)
    size = np.size(D)
    if size == 0:
        raise ValueError("rho of an empty array")
    return _kernels.sign_mismatches(np.asarray(D, dtype=np.float64),
                                    np.asarray(Dhat, dtype=np.float64)) / size


def sigmoid(a: float) -> float:
    if a >= 0:
        return 1.0 / (1.0 + np.exp(-a))
    e = np.exp(a)
    return e / (1.0 + e)


def _terms(Y, Yhat, anchor, config: LossConfig):
    """(L_Y, L_D, rho, dL_Y/dYhat, dL_D/dYhat)."""
    Y = np.asarray(Y, dtype=np.float64)
    Yhat = np.asarray(Yhat, dtype=np.float64)
    _check_same(Y, Yhat)
    if Y.ndim != 3:
        raise ValueError(f"expected B x H x N arrays, got shape {Y.shape}")
    size = Y.size
    mse = config.base is Base.MSE
    if config.diff.is_first:
        a = np.asarray(anchor, dtype=np.float64)
        a = a[:, -1] if a.ndim == 3 else a
        if a.shape != (Y.shape[0], Y.shape[2]):
            raise ValueError(f"anchor shape {a.shape} incompatible with {Y.shape}")
        ly, ld, mism, gy, gd = _kernels.first_diff_terms(Y, Yhat, a, mse)
        return ly / size, ld / size, mism / size, gy / size, gd / size
    D = difference(Y, anchor, config.diff)
    Dhat = difference(Yhat, anchor, config.diff)
    err, derr = Yhat - Y, Dhat - D
    if mse:
        gy, gdl = 2.0 * err, 2.0 * derr
        ly, ld = np.mean(err * err), np.mean(derr * derr)
    else:
        gy, gdl = np.sign(err), np.sign(derr)
        ly, ld = np.mean(np.abs(err)), np.mean(np.abs(derr))
    gd = difference_adjoint(gdl, config.diff)
    return float(ly), float(ld), rho(D, Dhat), gy / size, gd / size


def mix_weight(config: LossConfig, r: float, alpha: float | None = None) -> tuple[float, float]:
    """Coefficients (c_y, c_d) with L = c_y * L_Y + c_d * L_D."""
    mode = config.mode
    if mode is Mode.BASELINE:
        return 1.0, 0.0
    if mode is Mode.PLUS_LD:
        return 1.0, 1.0
    if mode is Mode.RHO_ONLY:
        return r, 0.0
    if mode is Mode.TDALIGN:
        return r, 1.0 - r
    a = config.alpha if alpha is None else alpha
    if not 0.0 <= a <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {a}")
    return a, 1.0 - a


def combined_loss(Y, Yhat, anchor, config: LossConfig = LossConfig(),
                  alpha: float | None = None) -> LossReport:
    """Loss components, total and gradient w.r.t. the prediction.

    ``alpha`` overrides ``config.alpha`` for the learnable-alpha mode.  The
    sign-inconsistency weight is a constant of the batch: no gradient flows
    through it.
    """
    ly, ld, r, gy, gd = _terms(Y, Yhat, anchor, config)
    cy, cd = mix_weight(config, r, alpha)
    total = cy * ly + cd * ld
    grad = cy * gy + cd * gd if cd else cy * gy
    weight = r if config.mode in (Mode.TDALIGN, Mode.RHO_ONLY) else cy
    return LossReport(ly, ld, r, total, grad, weight)


def loss_grad_wrt_prediction(Y, Yhat, anchor, config: LossConfig = LossConfig(),
                             alpha: float | None = None) -> np.ndarray:
    return combined_loss(Y, Yhat, anchor, config, alpha).grad_wrt_prediction


def metric_sums(Y, Yhat, anchor) -> np.ndarray:
    """Unnormalised sums (se, ae, se_d, ae_d, mismatches) for streaming aggregation."""
    Y = np.asarray(Y, dtype=np.float64)
    Yhat = np.asarray(Yhat, dtype=np.float64)
    _check_same(Y, Yhat)
    D = tdt(Y, anchor)
    Dhat = tdp(Yhat, anchor)
    e, de = Yhat - Y, Dhat - D
    return np.array([
        np.sum(e * e), np.sum(np.abs(e)), np.sum(de * de), np.sum(np.abs(de)),
        float(_kernels.sign_mismatches(D, Dhat)),
    ])


def evaluate_metrics(Y, Yhat, anchor) -> MetricsReport:
    """MSE/MAE on values, MSE_D/MAE_D/rho on first differences."""
    sums = metric_sums(Y, Yhat, anchor)
    return MetricsReport(*(sums / np.size(Y)).tolist())
