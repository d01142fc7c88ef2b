import json
from pathlib import Path

import numpy as np
import pandas as pd

from mbsts_tl import load_panel_csv
from mbsts_tl.cli import main

PREPARE = ["prepare", "--synthetic", "--out", "panel.csv", "--M", "2",
           "--d", "3", "--T", "40", "--seed", "1"]
TUNE = ["tune", "--panel", "panel.csv", "--segments", "1:18,19:40",
        "--lags", "0,1", "--grid-rho", "0.6", "--grid-S", "4",
        "--grid-varrho", "0.5", "--grid-lambda", "pi/2",
        "--iterations", "100", "--burn-in", "30", "--seed", "0",
        "--out-dir", "tune_out"]
FIT = ["fit", "--panel", "panel.csv", "--segments", "1:18,19:40",
       "--lag", "0", "--from-tune", "tune_out/selection.json", "--dominant",
       "--iterations", "100", "--burn-in", "30", "--seed", "0",
       "--out-dir", "fit_out"]


def _run_pipeline(workdir, monkeypatch):
    monkeypatch.chdir(workdir)
    assert main(PREPARE) == 0
    assert main(TUNE) == 0
    assert main(FIT) == 0


class TestPrepare:
    def test_synthetic_panel_and_truth(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(PREPARE) == 0
        panel = load_panel_csv("panel.csv")
        assert panel.n_units == 2 and panel.n_weeks == 40
        truth = json.loads(Path("panel.truth.json").read_text())
        assert np.asarray(truth["beta"]).shape == (2, 3)
        assert truth["true_lag"] == 0
        snapshot = json.loads(Path("panel_config.json").read_text())
        assert snapshot["synthetic"] is True and snapshot["T"] == 40

    def test_public_mode_requires_inputs(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["prepare", "--out", "p.csv"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_unknown_flag_is_usage_error(self):
        assert main(["prepare", "--out", "p.csv", "--bogus"]) == 1

    def test_unknown_command_is_usage_error(self):
        assert main(["frobnicate"]) == 1


class TestTune:
    def test_outputs_and_selection(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(PREPARE) == 0
        assert main(TUNE + ["--baseline"]) == 0
        out = Path("tune_out")
        for name in ("ae.csv", "coefficients.csv", "predictions.csv",
                     "selection.json", "tune_config.json", "baseline_ae.csv",
                     "baseline_coefficients.csv", "baseline_predictions.csv"):
            assert (out / name).exists(), name
        selection = json.loads((out / "selection.json").read_text())
        assert set(selection) == {"0", "1"}
        for sel in selection.values():
            assert sel["rho"] == 0.6 and sel["S"] == 4
            assert sel["mean_ae"] >= 0
        ae = pd.read_csv(out / "ae.csv")
        assert len(ae) == 2 * 2  # lags x segments, singleton grid

    def test_infeasible_segments_exit_2(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(PREPARE) == 0
        args = [v if v != "1:18,19:40" else "1:3,19:40" for v in TUNE]
        assert main(args) == 2
        assert "error" in capsys.readouterr().err


class TestFit:
    def test_fit_from_tune_with_dominant(self, tmp_path, monkeypatch):
        _run_pipeline(tmp_path, monkeypatch)
        out = Path("fit_out")
        coef = pd.read_csv(out / "coefficients.csv")
        assert list(coef.columns) == ["segment", "series", "predictor", "mean",
                                      "lower", "upper", "inclusion_prob", "lag"]
        preds = pd.read_csv(out / "predictions.csv")
        assert set(preds["segment"]) == {"1:18", "19:40"}
        dom = pd.read_csv(out / "dominant.csv")
        # one dominant predictor per (segment, unit)
        assert len(dom) == 2 * 2
        assert set(dom["predictor"]).issubset({"x1", "x2", "x3"})
        assert (out / "fit_config.json").exists()

    def test_explicit_point_without_tune(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(PREPARE) == 0
        args = ["fit", "--panel", "panel.csv", "--segments", "1:18,19:40",
                "--rho", "0.6", "--S", "4", "--varrho", "0.5",
                "--lambda", "1.5707963", "--iterations", "80", "--burn-in", "20",
                "--out-dir", "fit2"]
        assert main(args) == 0
        assert Path("fit2/coefficients.csv").exists()

    def test_missing_point_is_usage_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(PREPARE) == 0
        assert main(["fit", "--panel", "panel.csv", "--segments", "1:18,19:40",
                     "--out-dir", "f"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_panel_is_runtime_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(["fit", "--panel", "nope.csv", "--rho", "0.6", "--S", "4",
                     "--varrho", "0.5", "--lambda", "0", "--out-dir", "f"]) == 2
        assert "error" in capsys.readouterr().err


class TestDeterminism:
    def test_rerun_with_identical_flags_is_byte_identical(self, tmp_path,
                                                          monkeypatch):
        dirs = [tmp_path / "a", tmp_path / "b"]
        for d in dirs:
            d.mkdir()
            _run_pipeline(d, monkeypatch)
        files = sorted(p.relative_to(dirs[0])
                       for p in dirs[0].rglob("*") if p.is_file())
        assert files, "pipeline produced no outputs"
        for rel in files:
            assert (dirs[0] / rel).read_bytes() == (dirs[1] / rel).read_bytes(), rel
