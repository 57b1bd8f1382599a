"""Experiment configuration and the multi-seed train / ablate / sweep drivers."""

from __future__ import annotations

import copy
import csv
import dataclasses
import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .losses import ABLATION_MODES, METRIC_NAMES, DiffSpec, LossConfig, Mode
from .models import Kind, init_params, param_count, save_params
from .series import (
    SeriesMatrix, SplitSpec, WindowSet, chronological_split, fit_scaler, gen_ar1, gen_random_walk,
    gen_sine_mix, inject_gaussian_noise, load_csv,
)
from .training import ALPHA_KEY, TrainConfig, epoch_order, evaluate, fit, learnable_count

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Invalid or unknown experiment configuration field."""


@dataclass
class ExperimentConfig:
    """Flat experiment description; every field maps one-to-one to a JSON key."""

    # data
    data: str = "ar1"  # csv | ar1 | sine | random_walk
    csv_path: str | None = None
    date_column: str | None = "date"
    T: int = 20000
    N: int = 7
    phi: float = 0.9
    sigma: float = 1.0
    periods: list = field(default_factory=lambda: [24.0, 168.0])
    amplitudes: list = field(default_factory=lambda: [1.0, 0.5])
    data_seed: int = 1234
    split: list = field(default_factory=lambda: [0.6, 0.2, 0.2])
    stride: int = 1
    # model
    lookback: int = 96
    horizon: int = 96
    model: str = "dlinear"
    kernel: int = 25
    # training
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 10
    batch_size: int = 128
    patience: int = 3
    shuffle: bool = True
    # loss
    base: str = "mse"
    mode: str = "tdalign"
    alpha: float = 0.5
    tau: int = 1
    k: int = 1
    # protocol
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    noise_variances: list = field(default_factory=lambda: [0.0, 0.1, 0.5, 1.0])
    tau_list: list = field(default_factory=lambda: [1, 2, 3, 4])
    k_list: list = field(default_factory=lambda: [1, 6, 12, 24, 48])
    out: str = "runs"

    # fields that describe what to sweep or where to write, not what a run is
    NON_IDENTITY = ("noise_variances", "tau_list", "k_list", "out")

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(raw) - names)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(raw, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(copy.deepcopy(self), **changes)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        def bad(name, why):
            raise ConfigError(f"invalid config field {name!r}: {why}")

        if self.data not in ("csv", "ar1", "sine", "random_walk"):
            bad("data", f"unknown source {self.data!r}")
        if self.data == "csv":
            if not self.csv_path:
                bad("csv_path", "required when data is 'csv'")
            if not Path(self.csv_path).is_file():
                bad("csv_path", f"file not found: {self.csv_path}")
        for name in ("T", "N", "lookback", "horizon", "epochs", "batch_size", "stride", "tau", "k"):
            if not isinstance(getattr(self, name), int) or getattr(self, name) < 1:
                bad(name, "must be a positive integer")
        if self.data == "ar1" and not abs(self.phi) < 1:
            bad("phi", "must satisfy |phi| < 1")
        if self.sigma < 0 or (self.data == "ar1" and self.sigma == 0):
            bad("sigma", "must be positive")
        if self.model not in (k.value for k in Kind):
            bad("model", f"unknown model {self.model!r}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            bad("kernel", "must be a positive odd integer")
        if self.mode not in (m.value for m in Mode):
            bad("mode", f"unknown mode {self.mode!r}")
        if self.base not in ("mse", "mae"):
            bad("base", "must be 'mse' or 'mae'")
        if not 0 <= self.alpha <= 1:
            bad("alpha", "must lie in [0, 1]")
        if not self.seeds or not all(isinstance(s, int) for s in self.seeds):
            bad("seeds", "must be a non-empty list of integers")
        if any(v < 0 for v in self.noise_variances):
            bad("noise_variances", "variances must be >= 0")
        if self.patience < 0:
            bad("patience", "must be >= 0")
        if self.lr <= 0:
            bad("lr", "must be > 0")
        try:
            SplitSpec(tuple(self.split))
        except ValueError as exc:
            bad("split", str(exc))
        try:
            DiffSpec(self.tau, self.k).validate(self.horizon, self.lookback)
        except ValueError as exc:
            bad("tau/k", str(exc))

    def identity(self) -> dict:
        d = self.to_dict()
        for key in self.NON_IDENTITY:
            d.pop(key)
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.identity(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def loss_config(self) -> LossConfig:
        return LossConfig(self.base, self.mode, self.alpha, DiffSpec(self.tau, self.k))

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(lr=self.lr, beta1=self.beta1, beta2=self.beta2, adam_eps=self.adam_eps,
                           epochs=self.epochs, batch_size=self.batch_size, patience=self.patience,
                           seed=seed, loss=self.loss_config(), shuffle=self.shuffle)


def load_series(cfg: ExperimentConfig) -> SeriesMatrix:
    if cfg.data == "csv":
        return load_csv(cfg.csv_path, cfg.date_column)
    if cfg.data == "ar1":
        return gen_ar1(cfg.phi, cfg.sigma, cfg.T, cfg.N, seed=cfg.data_seed)
    if cfg.data == "sine":
        return gen_sine_mix(cfg.periods, cfg.amplitudes, cfg.sigma, cfg.T, cfg.N, seed=cfg.data_seed)
    return gen_random_walk(cfg.sigma, cfg.T, cfg.N, seed=cfg.data_seed)


@dataclass
class Prepared:
    train: WindowSet
    val: WindowSet
    test: WindowSet
    fingerprint: str


def _digest(*arrays) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
    return h.hexdigest()[:16]


def prepare(cfg: ExperimentConfig, series: SeriesMatrix | None = None, noise_variance: float = 0.0,
            noise_seed: int = 0) -> Prepared:
    """Split, scale on train statistics, optionally add noise to train, and window."""
    series = load_series(cfg) if series is None else series
    split = chronological_split(series, SplitSpec(tuple(cfg.split)), cfg.lookback)
    if split.val is None or split.test is None:
        raise ConfigError("invalid config field 'split': validation and test ratios must be > 0")
    scaler = fit_scaler(split.train)
    train = scaler.transform(split.train)
    if noise_variance:
        train = inject_gaussian_noise(train, noise_variance, seed=noise_seed)
    val = scaler.transform(split.val)
    test = scaler.transform(split.test)
    sets = [WindowSet(s.values, cfg.lookback, cfg.horizon, cfg.stride) for s in (train, val, test)]
    for name, ws in zip(("train", "val", "test"), sets):
        if not len(ws):
            raise ConfigError(
                f"dataset too short: {name} split has no windows for lookback {cfg.lookback}"
                f" + horizon {cfg.horizon}")
    fp = _digest(train.values, val.values, test.values,
                 np.array([cfg.lookback, cfg.horizon, cfg.stride], dtype=np.float64))
    return Prepared(*sets, fingerprint=fp)


def run_seed(cfg: ExperimentConfig, seed: int, data: Prepared, run_dir: Path | None = None) -> dict:
    """Train and test one seed; write its report and checkpoint under ``run_dir``."""
    tcfg = cfg.train_config(seed)
    params = init_params(cfg.model, cfg.lookback, cfg.horizon, cfg.kernel, seed=[seed, 0])
    start = time.perf_counter()
    best, report = fit(params, data.train, data.val, tcfg)
    metrics = evaluate(best, data.test)
    seconds = time.perf_counter() - start
    result = {
        "seed": seed,
        "metrics": metrics.as_dict(),
        "best_epoch": report.best_epoch,
        "epochs_run": len(report),
        "param_count": param_count(best),
        "learnable_count": learnable_count(best, tcfg),
        "data_fingerprint": data.fingerprint,
        "order_fingerprint": order_fingerprint(tcfg, len(data.train)),
    }
    if report.alpha:
        result["final_alpha"] = report.alpha[-1]
    if run_dir is not None:
        run_dir.mkdir(parents=True, exist_ok=True)
        report.to_csv(run_dir / "train_report.csv", header=report_header(cfg, seed))
        extra = {"fingerprint": np.array(cfg.fingerprint())}
        if report.alpha:
            extra[ALPHA_KEY] = np.array(report.alpha[-1])
        save_params(best, run_dir / "checkpoint.npz", extra)
    result["_seconds"] = seconds
    result["_report"] = report
    return result


def order_fingerprint(tcfg: TrainConfig, n: int) -> str:
    """Digest of the batch order for every configured epoch."""
    return _digest(*(epoch_order(n, tcfg, e) for e in range(tcfg.epochs)))


def report_header(cfg: ExperimentConfig, seed: int) -> dict:
    return {
        "fingerprint": cfg.fingerprint(),
        "seed": seed,
        "mode": cfg.mode,
        "model": cfg.model,
        "defaults": (f"lr={cfg.lr} batch_size={cfg.batch_size} epochs={cfg.epochs} "
                     f"patience={cfg.patience} kernel={cfg.kernel} (chosen here, not taken from the"
                     f" original baselines)"),
        "backend": _kernels.backend(),
    }


def summarize(cfg: ExperimentConfig, per_seed: list[dict]) -> dict:
    """Mean and population std of every metric across seeds."""
    table = np.array([[r["metrics"][m] for m in METRIC_NAMES] for r in per_seed])
    clean = [{k: v for k, v in r.items() if not k.startswith("_")} for r in per_seed]
    return {
        "fingerprint": cfg.fingerprint(),
        "config": cfg.identity(),
        "seeds": [r["seed"] for r in per_seed],
        "per_seed": clean,
        "mean": dict(zip(METRIC_NAMES, table.mean(axis=0).tolist())),
        "std": dict(zip(METRIC_NAMES, table.std(axis=0).tolist())),
        "median": dict(zip(METRIC_NAMES, np.median(table, axis=0).tolist())),
        "wall_clock": {"total_seconds": float(sum(r["_seconds"] for r in per_seed)),
                       "per_seed_seconds": [r["_seconds"] for r in per_seed]},
    }


def write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def cmd_train(cfg: ExperimentConfig, out: Path | None = None, series: SeriesMatrix | None = None,
              noise_variance: float = 0.0) -> dict:
    """Multi-seed train + test; layout ``out/<fingerprint>/seed_<s>/`` plus ``summary.json``."""
    series = load_series(cfg) if series is None else series
    root = None
    if out is not None:
        root = Path(out) / (cfg.fingerprint() + (f"_noise{noise_variance!r}" if noise_variance else ""))
    per_seed = []
    for seed in cfg.seeds:
        data = prepare(cfg, series, noise_variance, noise_seed=[seed, 2])
        run_dir = None if root is None else root / f"seed_{seed}"
        res = run_seed(cfg, seed, data, run_dir)
        logger.info("seed %d: %s", seed, {k: round(v, 5) for k, v in res["metrics"].items()})
        per_seed.append(res)
    summary = summarize(cfg, per_seed)
    if noise_variance:
        summary["train_noise_variance"] = float(noise_variance)
    if root is not None:
        write_json(summary, root / "summary.json")
    return summary


def _table_rows(label_key: str, entries: list[tuple[object, dict]]) -> list[dict]:
    rows = []
    for label, summary in entries:
        row = {label_key: label, "fingerprint": summary["fingerprint"]}
        for m in METRIC_NAMES:
            row[f"{m}_mean"] = summary["mean"][m]
            row[f"{m}_std"] = summary["std"][m]
        rows.append(row)
    return rows


def write_table(rows: list[dict], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})


def _check_controlled(summaries: list[dict]) -> None:
    """Compared settings must see identical data and batch order per seed."""
    def keys(s):
        return [(r["seed"], r["data_fingerprint"], r["order_fingerprint"]) for r in s["per_seed"]]

    ref = keys(summaries[0])
    for s in summaries[1:]:
        if keys(s) != ref:
            raise RuntimeError(f"run {s['fingerprint']} saw different data or batch order")


def cmd_ablate(cfg: ExperimentConfig, out: Path | None = None, modes=ABLATION_MODES) -> dict:
    series = load_series(cfg)
    entries = []
    for mode in modes:
        sub = cfg.replace(mode=Mode(mode).value)
        entries.append((Mode(mode).value, cmd_train(sub, out, series)))
    _check_controlled([s for _, s in entries])
    rows = _table_rows("mode", entries)
    result = {"fingerprint": cfg.fingerprint(), "rows": rows,
              "data_fingerprints": entries[0][1]["per_seed"][0]["data_fingerprint"]}
    if out is not None:
        root = Path(out) / f"ablate_{cfg.fingerprint()}"
        write_table(rows, root / "ablation.csv")
        write_json(result, root / "ablation.json")
    return result


def cmd_sweep_diffspec(cfg: ExperimentConfig, tau_list=None, k_list=None,
                       out: Path | None = None) -> dict:
    """One alignment run per (order, interval); order sweeps hold k=1 and vice versa."""
    tau_list = list(cfg.tau_list if tau_list is None else tau_list)
    k_list = list(cfg.k_list if k_list is None else k_list)
    specs = [(t, 1) for t in tau_list] + [(1, k) for k in k_list if (1, k) not in [(t, 1) for t in tau_list]]
    for t, k in specs:
        try:
            DiffSpec(t, k).validate(cfg.horizon, cfg.lookback)
        except ValueError as exc:
            raise ConfigError(f"invalid difference spec tau={t}, k={k}: {exc}") from None
    series = load_series(cfg)
    entries = []
    for t, k in specs:
        summary = cmd_train(cfg.replace(mode=Mode.TDALIGN.value, tau=t, k=k), out, series)
        entries.append(((t, k), summary))
    _check_controlled([s for _, s in entries])
    rows = []
    for (t, k), s in entries:
        row = _table_rows("tau", [(t, s)])[0]
        row = {"tau": t, "k": k, **{kk: vv for kk, vv in row.items() if kk != "tau"}}
        rows.append(row)
    result = {"fingerprint": cfg.fingerprint(), "rows": rows}
    if out is not None:
        root = Path(out) / f"sweep_diff_{cfg.fingerprint()}"
        write_table(rows, root / "sweep_diff.csv")
        write_json(result, root / "sweep_diff.json")
    return result


def cmd_sweep_noise(cfg: ExperimentConfig, variances=None, out: Path | None = None,
                    modes=(Mode.BASELINE, Mode.TDALIGN)) -> dict:
    """Baseline and alignment runs per noise variance added to the scaled train split."""
    variances = list(cfg.noise_variances if variances is None else variances)
    if any(v < 0 for v in variances):
        raise ConfigError("invalid config field 'noise_variances': variances must be >= 0")
    series = load_series(cfg)
    rows = []
    for var in variances:
        row = {"variance": float(var)}
        for mode in modes:
            sub = cfg.replace(mode=Mode(mode).value)
            s = cmd_train(sub, out, series, noise_variance=var)
            row[f"{Mode(mode).value}_fingerprint"] = s["fingerprint"]
            for m in METRIC_NAMES:
                row[f"{Mode(mode).value}_{m}_mean"] = s["mean"][m]
                row[f"{Mode(mode).value}_{m}_std"] = s["std"][m]
        rows.append(row)
    result = {"fingerprint": cfg.fingerprint(), "rows": rows}
    if out is not None:
        root = Path(out) / f"sweep_noise_{cfg.fingerprint()}"
        write_table(rows, root / "sweep_noise.csv")
        write_json(result, root / "sweep_noise.json")
    return result
