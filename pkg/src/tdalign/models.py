"""Channel-shared linear forecasters with hand-written forward and backward passes."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels


class Kind(str, enum.Enum):
    LINEAR = "linear"
    DLINEAR = "dlinear"


@dataclass
class ForecasterParams:
    """Weights (H x L) and biases (H,) keyed by name.

    ``linear`` uses ``weight``/``bias``; ``dlinear`` uses ``weight_trend``,
    ``bias_trend``, ``weight_seasonal`` and ``bias_seasonal``.
    """

    kind: Kind
    arrays: dict[str, np.ndarray]
    kernel: int = 25

    def __post_init__(self):
        self.kind = Kind(self.kind)

    @property
    def horizon(self) -> int:
        return next(iter(self.arrays.values())).shape[0]

    @property
    def lookback(self) -> int:
        return self.arrays[_weight_names(self.kind)[0]].shape[1]

    def copy(self) -> "ForecasterParams":
        return ForecasterParams(self.kind, {k: v.copy() for k, v in self.arrays.items()}, self.kernel)

    def zeros_like(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}


def _weight_names(kind: Kind) -> tuple[str, ...]:
    if kind is Kind.LINEAR:
        return ("weight",)
    return ("weight_trend", "weight_seasonal")


def _pairs(kind: Kind):
    if kind is Kind.LINEAR:
        return [("weight", "bias")]
    return [("weight_trend", "bias_trend"), ("weight_seasonal", "bias_seasonal")]


def moving_average_decompose(X, kernel: int):
    """Split ``X`` (B x L x N) into a centred moving-average trend and the remainder.

    The ends are padded by repeating the edge rows ``(kernel - 1) / 2`` times.
    """
    if kernel < 1 or kernel % 2 == 0:
        raise ValueError(f"moving-average kernel must be a positive odd integer, got {kernel}")
    X = np.asarray(X, dtype=np.float64)
    if kernel > 2 * X.shape[1] - 1:
        raise ValueError(f"kernel {kernel} too wide for lookback {X.shape[1]}")
    trend = _kernels.moving_average(X, kernel)
    return trend, X - trend


def init_params(kind, lookback: int, horizon: int, kernel: int = 25, seed=0) -> ForecasterParams:
    """Weights uniform in [-1/L, 1/L], biases zero."""
    kind = Kind(kind)
    if lookback < 1 or horizon < 1:
        raise ValueError("lookback and horizon must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / lookback
    arrays = {}
    for w, b in _pairs(kind):
        arrays[w] = rng.uniform(-bound, bound, size=(horizon, lookback))
        arrays[b] = np.zeros(horizon)
    return ForecasterParams(kind, arrays, kernel)


def _components(params: ForecasterParams, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[1] != params.lookback:
        raise ValueError(f"input shape {X.shape} does not match lookback {params.lookback}")
    if params.kind is Kind.LINEAR:
        return [X]
    return list(moving_average_decompose(X, params.kernel))


def _apply(W, b, X):
    # (B, L, N) -> (B, H, N) with one weight shared by every channel
    return np.einsum("hl,bln->bhn", W, X, optimize=True) + b[None, :, None]


def forward(params: ForecasterParams, X, components=None):
    comps = _components(params, X) if components is None else components
    out = None
    for (w, b), Xc in zip(_pairs(params.kind), comps):
        y = _apply(params.arrays[w], params.arrays[b], Xc)
        out = y if out is None else out + y
    return out


def backward(params: ForecasterParams, X, upstream, components=None) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss given its gradient ``upstream`` w.r.t. the prediction."""
    upstream = np.asarray(upstream, dtype=np.float64)
    comps = _components(params, X) if components is None else components
    expect = (comps[0].shape[0], params.horizon, comps[0].shape[2])
    if upstream.shape != expect:
        raise ValueError(f"upstream shape {upstream.shape}, expected {expect}")
    grads = {}
    bias_grad = upstream.sum(axis=(0, 2))
    for (w, b), Xc in zip(_pairs(params.kind), comps):
        grads[w] = np.einsum("bhn,bln->hl", upstream, Xc, optimize=True)
        grads[b] = bias_grad.copy()
    return grads


def param_count(params: ForecasterParams) -> int:
    return int(sum(v.size for v in params.arrays.values()))


# ---------------------------------------------------------------------------
# checkpoints: a plain .npz archive of named float64 arrays plus two metadata
# entries (``__kind__`` as a 0-d string array, ``__kernel__`` as a 0-d int).


def save_params(params: ForecasterParams, path, extra: dict[str, np.ndarray] | None = None) -> Path:
    path = Path(path)
    payload = {k: np.asarray(v, dtype=np.float64) for k, v in params.arrays.items()}
    payload.update({k: np.asarray(v) for k, v in (extra or {}).items()})
    payload["__kind__"] = np.array(params.kind.value)
    payload["__kernel__"] = np.array(params.kernel, dtype=np.int64)
    with path.open("wb") as fh:
        np.savez(fh, **payload)
    return path


def load_params(path) -> tuple[ForecasterParams, dict[str, np.ndarray]]:
    with np.load(Path(path), allow_pickle=False) as data:
        kind = Kind(str(data["__kind__"]))
        kernel = int(data["__kernel__"])
        names = {n for pair in _pairs(kind) for n in pair}
        arrays = {k: data[k].copy() for k in data.files if k in names}
        extra = {k: data[k].copy() for k in data.files if k not in names and not k.startswith("__")}
    missing = names - set(arrays)
    if missing:
        raise ValueError(f"checkpoint {path} lacks arrays {sorted(missing)}")
    return ForecasterParams(kind, arrays, kernel), extra
