import json
import subprocess
import sys
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from tdalign.cli import main
from tdalign.experiment import (
    ConfigError, ExperimentConfig, cmd_ablate, cmd_sweep_diffspec, cmd_sweep_noise, cmd_train,
    prepare,
)
from tdalign.models import load_params
from tdalign.report import cmd_report
from tdalign.series import load_csv
from tdalign.training import TrainReport

TINY = dict(T=400, N=2, lookback=16, horizon=8, kernel=5, epochs=2, batch_size=32, seeds=[0, 1],
            lr=1e-3)


def tiny(**kw):
    return ExperimentConfig.from_dict({**TINY, **kw})


def strip_clock(summary):
    return {k: v for k, v in summary.items() if k != "wall_clock"}


def write_config(tmp_path, **kw):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({**TINY, **kw}))
    return path


# -- config ---------------------------------------------------------------------

def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="lrr"):
        ExperimentConfig.from_dict({"lrr": 0.1})


@pytest.mark.parametrize("field,value", [("phi", 1.0), ("kernel", 4), ("mode", "x"), ("alpha", 2.0),
                                         ("seeds", []), ("split", [0.5, 0.6, 0.1]), ("tau", 9),
                                         ("horizon", 0), ("data", "parquet")])
def test_invalid_field_named(field, value):
    with pytest.raises(ConfigError, match=field.split("/")[0]):
        tiny(**{field: value})


def test_fingerprint_ignores_output_fields():
    a, b = tiny(), tiny(out="elsewhere", tau_list=[1])
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != tiny(lr=2e-3).fingerprint()


def test_too_short_dataset():
    with pytest.raises(ConfigError, match="too short"):
        prepare(tiny(T=30))


# -- train ------------------------------------------------------------------------

def test_train_layout_and_summary(tmp_path):
    cfg = tiny()
    s = cmd_train(cfg, tmp_path)
    root = tmp_path / cfg.fingerprint()
    assert (root / "summary.json").is_file()
    for seed in cfg.seeds:
        assert (root / f"seed_{seed}" / "train_report.csv").is_file()
        params, extra = load_params(root / f"seed_{seed}" / "checkpoint.npz")
        assert str(extra["fingerprint"]) == cfg.fingerprint()
    table = np.array([[r["metrics"][m] for m in s["mean"]] for r in s["per_seed"]])
    np.testing.assert_array_equal(list(s["mean"].values()), table.mean(axis=0))
    np.testing.assert_array_equal(list(s["std"].values()), table.std(axis=0))
    on_disk = json.loads((root / "summary.json").read_text())
    assert strip_clock(on_disk) == json.loads(json.dumps(strip_clock(s)))


def test_single_seed_std_zero():
    s = cmd_train(tiny(seeds=[3]))
    assert all(v == 0.0 for v in s["std"].values())


def test_train_rerun_identical(tmp_path):
    cfg = tiny()
    cmd_train(cfg, tmp_path / "a")
    cmd_train(cfg, tmp_path / "b")
    fp = cfg.fingerprint()
    a = json.loads((tmp_path / "a" / fp / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / fp / "summary.json").read_text())
    assert json.dumps(strip_clock(a), sort_keys=True) == json.dumps(strip_clock(b), sort_keys=True)
    ra = (tmp_path / "a" / fp / "seed_0" / "train_report.csv").read_text().splitlines()
    rb = (tmp_path / "b" / fp / "seed_0" / "train_report.csv").read_text().splitlines()
    # the seconds column is wall clock; everything else must match
    strip = lambda lines: [",".join(l.split(",")[:-1]) for l in lines]
    assert strip(ra) == strip(rb)


def test_csv_dataset_round_trip(tmp_path):
    assert main(["synth", "--config", str(write_config(tmp_path)), "--out", str(tmp_path), "--quiet"]) == 0
    series = load_csv(tmp_path / "synthetic.csv")
    assert series.values.shape == (400, 2)
    cfg_a = tiny(seeds=[0])
    cfg_b = tiny(seeds=[0], data="csv", csv_path=str(tmp_path / "synthetic.csv"))
    a, b = cmd_train(cfg_a), cmd_train(cfg_b)
    assert a["per_seed"][0]["metrics"] == b["per_seed"][0]["metrics"]


# -- ablate and sweeps -----------------------------------------------------------

def test_ablate_controlled(tmp_path):
    cfg = tiny()
    res = cmd_ablate(cfg, tmp_path)
    assert [r["mode"] for r in res["rows"]] == ["baseline", "plus_ld", "rho_only", "learnable_alpha",
                                                "tdalign"]
    assert {"mse_mean", "mae_mean", "mse_d_mean", "mae_d_mean", "rho_mean"} <= set(res["rows"][0])
    root = tmp_path / f"ablate_{cfg.fingerprint()}"
    assert (root / "ablation.csv").read_text().count("\n") == 6
    per_mode = {}
    for r in res["rows"]:
        s = json.loads((tmp_path / r["fingerprint"] / "summary.json").read_text())
        per_mode[r["mode"]] = [(p["data_fingerprint"], p["order_fingerprint"]) for p in s["per_seed"]]
    assert len({tuple(v) for v in per_mode.values()}) == 1
    counts = {r["mode"]: json.loads((tmp_path / r["fingerprint"] / "summary.json").read_text())
              ["per_seed"][0]["learnable_count"] for r in res["rows"]}
    assert counts["tdalign"] == counts["baseline"]
    assert counts["learnable_alpha"] == counts["baseline"] + 1


def test_ablate_perfect_fit_all_zero():
    # a constant series scales to all zeros, so every model predicts it exactly
    cfg = tiny(data="sine", amplitudes=[0.0, 0.0], sigma=0.0, seeds=[0])
    res = cmd_ablate(cfg)
    for row in res["rows"]:
        for m in ("mse", "mae", "mse_d", "mae_d", "rho"):
            assert row[f"{m}_mean"] == 0.0


def test_sweep_diff_cell_matches_train(tmp_path):
    cfg = tiny(mode="tdalign")
    res = cmd_sweep_diffspec(cfg, tau_list=[1, 2], k_list=[1, 3], out=tmp_path)
    assert [(r["tau"], r["k"]) for r in res["rows"]] == [(1, 1), (2, 1), (1, 3)]
    plain = cmd_train(cfg)
    assert res["rows"][0]["fingerprint"] == plain["fingerprint"]
    assert res["rows"][0]["mse_mean"] == plain["mean"]["mse"]
    assert (tmp_path / f"sweep_diff_{cfg.fingerprint()}" / "sweep_diff.csv").is_file()


def test_sweep_diff_rows_per_order():
    res = cmd_sweep_diffspec(tiny(seeds=[0]), tau_list=[1, 2], k_list=[])
    assert len(res["rows"]) == 2


def test_sweep_diff_invalid_named():
    with pytest.raises(ConfigError, match="tau=9"):
        cmd_sweep_diffspec(tiny(), tau_list=[9], k_list=[])


def test_sweep_noise(tmp_path):
    cfg = tiny(seeds=[0])
    res = cmd_sweep_noise(cfg, [0.0, 0.5], out=tmp_path)
    assert len(res["rows"]) == 2
    row0 = res["rows"][0]
    assert {"baseline_mse_mean", "tdalign_mse_mean"} <= set(row0)
    plain = cmd_train(cfg.replace(mode="baseline"))
    assert row0["baseline_mse_mean"] == plain["mean"]["mse"]
    assert res["rows"][1]["baseline_mse_mean"] != row0["baseline_mse_mean"]
    with pytest.raises(ConfigError):
        cmd_sweep_noise(cfg, [-1.0])


def test_noise_leaves_val_and_test_clean():
    cfg = tiny()
    clean, noisy = prepare(cfg), prepare(cfg, noise_variance=1.0, noise_seed=0)
    np.testing.assert_array_equal(clean.val.values, noisy.val.values)
    np.testing.assert_array_equal(clean.test.values, noisy.test.values)
    assert not np.array_equal(clean.train.values, noisy.train.values)


# -- report -----------------------------------------------------------------------

def test_report_single_and_merged(tmp_path):
    cfg_a, cfg_b = tiny(seeds=[0]), tiny(seeds=[0], mode="baseline")
    cmd_train(cfg_a, tmp_path / "runs")
    cmd_train(cfg_b, tmp_path / "runs")
    run_a = tmp_path / "runs" / cfg_a.fingerprint() / "seed_0"
    res = cmd_report([run_a], tmp_path / "rep_a")
    epochs = len((run_a / "train_report.csv").read_text().splitlines()) - 1 - 6  # minus header, comments
    assert res["rows"] == epochs * len(TrainReport.COLUMNS[1:])
    for svg in res["svg"]:
        root = ET.parse(svg).getroot()
        assert root.tag.endswith("svg")
        text = open(svg).read()
        assert "href" not in text and "http" not in text.replace("http://www.w3.org/2000/svg", "")
    merged = cmd_report([tmp_path / "runs"], tmp_path / "rep_ab", svg=False)
    lines = (tmp_path / "rep_ab" / "curves_tidy.csv").read_text().splitlines()[1:]
    assert len(lines) == merged["rows"]
    fps = {l.split(",")[1] for l in lines}
    assert fps == {cfg_a.fingerprint(), cfg_b.fingerprint()}


def test_report_missing_and_corrupt(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope"):
        cmd_report([tmp_path / "nope"], tmp_path)
    bad = tmp_path / "run"
    bad.mkdir()
    (bad / "train_report.csv").write_text("# fingerprint: x\nepoch,train_ly\n0,1\n")
    with pytest.raises(ValueError, match="train_report.csv"):
        cmd_report([bad], tmp_path)


# -- CLI --------------------------------------------------------------------------

def test_cli_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path, seeds=[0], epochs=1)
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 0
    assert main(["train", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"epochz": 3}))
    assert main(["train", "--config", str(bad)]) == 1
    assert "epochz" in capsys.readouterr().err
    assert main(["frobnicate"]) == 1
    assert main(["report", str(tmp_path / "nothing"), "--out", str(tmp_path)]) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_numeric_failure(tmp_path):
    # Adam moves each weight by about lr per step, so this step size overflows the forecast
    cfg = write_config(tmp_path, lr=1e307, seeds=[0], epochs=3, mode="baseline")
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path), "--quiet"]) == 2


def test_cli_seed_override_and_subcommands(tmp_path, capsys):
    cfg = write_config(tmp_path, epochs=1)
    out = tmp_path / "o"
    assert main(["train", "--config", str(cfg), "--out", str(out), "--seeds", "5"]) == 0
    printed = json.loads(capsys.readouterr().out)
    summary = json.loads((out / printed["fingerprint"] / "summary.json").read_text())
    assert summary["seeds"] == [5]
    assert main(["ablate", "--config", str(cfg), "--out", str(out), "--seeds", "0", "--quiet"]) == 0
    assert main(["sweep-diff", "--config", str(cfg), "--out", str(out), "--seeds", "0", "--tau", "1,2",
                 "--k", "2", "--quiet"]) == 0
    assert main(["sweep-noise", "--config", str(cfg), "--out", str(out), "--seeds", "0",
                 "--variances", "0,0.1", "--quiet"]) == 0
    assert main(["report", str(out), "--out", str(out / "report"), "--quiet"]) == 0
    assert (out / "report" / "curves_tidy.csv").is_file()
    assert capsys.readouterr().out == ""


def test_cli_verify_theory(tmp_path):
    assert main(["verify-theory", "--out", str(tmp_path), "--trials", "50000", "--quiet"]) == 0
    first = json.loads((tmp_path / "verify_theory.json").read_text())
    assert all(c["passed"] for c in first["checks"])
    psi = [c for c in first["checks"] if c["check"] == "psi_zero_without_coupling"][0]
    assert psi["max_error"] == 0.0
    assert main(["verify-theory", "--out", str(tmp_path), "--trials", "50000", "--quiet"]) == 0
    assert json.loads((tmp_path / "verify_theory.json").read_text()) == first


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tdalign", "synth", "--out", str(tmp_path), "--quiet",
                          "--config", str(write_config(tmp_path))], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "synthetic.csv").is_file()
