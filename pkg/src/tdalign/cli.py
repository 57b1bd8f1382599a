"""Command-line entry point: ``tdalign <subcommand> [--config PATH] [--out DIR]``.

Exit status: 0 on success, 1 for usage or configuration errors, 2 for
numeric failures (non-finite loss, violated identity).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .experiment import (
    ConfigError, ExperimentConfig, cmd_ablate, cmd_sweep_diffspec, cmd_sweep_noise, cmd_train,
    load_series, write_json,
)
from .series import SeriesError, save_csv
from .training import NumericalError

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2

logger = logging.getLogger("tdalign")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tdalign",
                                     description="Temporal-difference alignment experiments.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment config (flat schema)")
    common.add_argument("--out", type=Path, help="output directory (overrides config 'out')")
    common.add_argument("--seeds", type=_int_list, help="comma-separated seed override")
    common.add_argument("--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("train", parents=[common], help="multi-seed train and test")
    sub.add_parser("ablate", parents=[common], help="compare the five loss settings")
    p = sub.add_parser("sweep-diff", parents=[common], help="sweep difference order and interval")
    p.add_argument("--tau", type=_int_list, help="orders to sweep (default from config)")
    p.add_argument("--k", type=_int_list, help="intervals to sweep (default from config)")
    p = sub.add_parser("sweep-noise", parents=[common], help="train-set noise robustness sweep")
    p.add_argument("--variances", type=_float_list, help="noise variances (default from config)")
    p = sub.add_parser("verify-theory", parents=[common], help="run identity and Monte Carlo checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1_000_000, help="Monte Carlo trials per instance")
    p = sub.add_parser("report", parents=[common], help="merge learning curves into tidy CSV/SVG")
    p.add_argument("runs", nargs="+", type=Path, help="run directories or train_report.csv files")
    p.add_argument("--no-svg", action="store_true")
    p = sub.add_parser("synth", parents=[common], help="write the configured generated dataset as CSV")
    p.add_argument("--output", type=Path, help="CSV path (default <out>/synthetic.csv)")
    return parser


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seeds:
        cfg = cfg.replace(seeds=args.seeds)
    return cfg


def _emit(obj, quiet: bool) -> None:
    if not quiet:
        print(json.dumps(obj, indent=2, sort_keys=True))


def _brief(summary: dict) -> dict:
    return {"fingerprint": summary["fingerprint"], "mean": summary["mean"], "std": summary["std"]}


def run(args) -> int:
    cfg = _config(args)
    out = args.out or Path(cfg.out)
    if args.command == "train":
        _emit(_brief(cmd_train(cfg, out)), args.quiet)
    elif args.command == "ablate":
        _emit(cmd_ablate(cfg, out)["rows"], args.quiet)
    elif args.command == "sweep-diff":
        _emit(cmd_sweep_diffspec(cfg, args.tau, args.k, out)["rows"], args.quiet)
    elif args.command == "sweep-noise":
        _emit(cmd_sweep_noise(cfg, args.variances, out)["rows"], args.quiet)
    elif args.command == "verify-theory":
        from .theory import run_checks

        checks = run_checks(seed=args.seed, mc_trials=args.trials)
        write_json({"seed": args.seed, "trials": args.trials, "checks": checks}, out / "verify_theory.json")
        _emit(checks, args.quiet)
        if not all(c["passed"] for c in checks):
            failed = ", ".join(c["check"] for c in checks if not c["passed"])
            print(f"tdalign: identity violation: {failed}", file=sys.stderr)
            return EXIT_NUMERIC
    elif args.command == "report":
        from .report import cmd_report

        _emit(cmd_report(args.runs, out, svg=not args.no_svg), args.quiet)
    elif args.command == "synth":
        if cfg.data == "csv":
            raise ConfigError("invalid config field 'data': synth needs a generator, not 'csv'")
        path = args.output or out / "synthetic.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        save_csv(load_series(cfg), path)
        _emit({"csv": str(path)}, args.quiet)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except (NumericalError, FloatingPointError) as exc:
        print(f"tdalign: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SeriesError, FileNotFoundError, ValueError) as exc:
        # ValueError also covers corrupt report files and bad checkpoint contents
        print(f"tdalign: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
