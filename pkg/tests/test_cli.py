import numpy as np
import pandas as pd
import pytest
import yaml

from esg_regmv.cli import main
from esg_regmv.simulation import load_population

from conftest import write_wide_csv


@pytest.fixture
def panel_files(tmp_path, rng):
    """Two-factor panel data on disk, wide CSV layout."""
    p, t = 12, 80
    dates = [f"2015-{i:03d}" for i in range(t)]
    loadings = rng.normal(0.0, 1.0, size=(p, 2))
    factors = rng.normal(0.0, 0.02, size=(t, 2))
    ret = factors @ loadings.T + rng.normal(0.0, 0.004, size=(t, p)) + 0.004
    esg = np.clip(rng.normal(0.7, 0.1, size=(t, p)), 0.1, 1.3)
    names = [f"S{i:02d}" for i in range(p)]
    ret_csv = write_wide_csv(tmp_path / "ret.csv", dates, {n: ret[:, i] for i, n in enumerate(names)})
    esg_csv = write_wide_csv(tmp_path / "esg.csv", dates, {n: esg[:, i] for i, n in enumerate(names)})
    rf_csv = write_wide_csv(tmp_path / "rf.csv", dates, {"rf": [0.0005] * t})
    return ret_csv, esg_csv, rf_csv


def write_config(tmp_path, mapping, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(mapping), encoding="utf-8")
    return path


class TestCalibrateCommand:
    def test_roundtrip_and_factor_count(self, tmp_path, panel_files, capsys):
        ret_csv, esg_csv, rf_csv = panel_files
        cfg = write_config(
            tmp_path,
            {
                "calibrate": {
                    "returns_csv": str(ret_csv),
                    "esg_csv": str(esg_csv),
                    "riskfree_csv": str(rf_csv),
                }
            },
        )
        out = tmp_path / "out"
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
        printed = capsys.readouterr().out
        assert "factors: 2" in printed

        pop = load_population(out / "model.npz")
        first = (out / "model.npz").read_bytes()
        assert main(["calibrate", "--config", str(cfg), "--out", str(out)]) == 0
        assert (out / "model.npz").read_bytes() == first
        again = load_population(out / "model.npz")
        assert np.array_equal(again.returns.sigma, pop.returns.sigma)

    def test_missing_file_exit_2(self, tmp_path, panel_files, capsys):
        ret_csv, esg_csv, rf_csv = panel_files
        cfg = write_config(
            tmp_path,
            {
                "calibrate": {
                    "returns_csv": str(tmp_path / "nope.csv"),
                    "esg_csv": str(esg_csv),
                    "riskfree_csv": str(rf_csv),
                }
            },
        )
        code = main(["calibrate", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert code == 2
        assert "nope.csv" in capsys.readouterr().err


class TestSimulateCommand:
    def test_golden_determinism_and_single_row(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "simulate": {
                    "synthetic": {"p": 12, "seed": 5},
                    "t_obs": 30,
                    "reps": 1,
                    "seed": 9,
                    "q": {"kind": "Identity"},
                    "strategies": ["Oracle"],
                }
            },
        )
        out1, out2 = tmp_path / "o1", tmp_path / "o2"
        assert main(["simulate", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["simulate", "--config", str(cfg), "--out", str(out2)]) == 0
        b1 = (out1 / "table.csv").read_bytes()
        assert b1 == (out2 / "table.csv").read_bytes()
        frame = pd.read_csv(out1 / "table.csv", index_col=0)
        assert list(frame.index) == ["Oracle"]
        assert list(frame.columns) == ["AM", "SD", "SR", "AM_esg", "SD_esg", "n"]

    def test_population_sigma_curve_monotone(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "simulate": {
                    "synthetic": {"p": 20, "seed": 5},
                    "t_obs": 40,
                    "reps": 10,
                    "seed": 9,
                    "q": {"kind": "PopulationSigma"},
                    "strategies": ["Oracle"],
                    "curve": True,
                }
            },
        )
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        curve = pd.read_csv(out / "sr_curve.csv")
        star = curve["theta_star_mean"].to_numpy()
        assert np.all(np.diff(star) > -1e-9)

    def test_eta_gap_output(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {
                "simulate": {
                    "synthetic": {"p": 16, "seed": 5},
                    "t_obs": 40,
                    "reps": 4,
                    "seed": 9,
                    "q": {"kind": "Identity"},
                    "strategies": ["Oracle"],
                    "eta_gap": [{"p": 8, "t_obs": 24}, {"p": 16, "t_obs": 48}],
                }
            },
        )
        out = tmp_path / "o"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        gaps = pd.read_csv(out / "eta_gaps.csv")
        assert set(gaps.columns) == {"p", "t_obs", "gap"}
        assert set(gaps["p"]) == {8, 16}

    def test_seed_required(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {"simulate": {"synthetic": {"p": 8, "seed": 5}, "t_obs": 20, "reps": 1}},
        )
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_model_file_input(self, tmp_path):
        from esg_regmv.simulation import save_population, synthetic_population

        model = tmp_path / "m.npz"
        save_population(model, synthetic_population(10, seed=2))
        cfg = write_config(
            tmp_path,
            {
                "simulate": {
                    "model": str(model),
                    "t_obs": 25,
                    "reps": 2,
                    "seed": 4,
                    "q": {"kind": "DiagSampleCov"},
                    "strategies": ["Oracle", "M-MV-O"],
                }
            },
        )
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0


class TestBacktestCommand:
    def test_smoke_and_determinism(self, tmp_path, panel_files):
        ret_csv, esg_csv, rf_csv = panel_files
        cfg = write_config(
            tmp_path,
            {
                "backtest": {
                    "returns_csv": str(ret_csv),
                    "esg_csv": str(esg_csv),
                    "riskfree_csv": str(rf_csv),
                    "window": 30,
                    "strategies": ["1/N"],
                }
            },
        )
        out1, out2 = tmp_path / "b1", tmp_path / "b2"
        assert main(["backtest", "--config", str(cfg), "--out", str(out1)]) == 0
        assert main(["backtest", "--config", str(cfg), "--out", str(out2)]) == 0
        assert (out1 / "report.csv").read_bytes() == (out2 / "report.csv").read_bytes()
        frame = pd.read_csv(out1 / "report.csv", index_col=0)
        assert frame.loc["1/N", "TO"] >= 0.0
        audit = pd.read_csv(out1 / "audit.csv")
        assert set(audit.columns) == {"strategy", "date", "asset", "weight"}

    def test_p_larger_than_window_failure_markers(self, tmp_path, panel_files):
        ret_csv, esg_csv, rf_csv = panel_files
        cfg = write_config(
            tmp_path,
            {
                "backtest": {
                    "returns_csv": str(ret_csv),
                    "esg_csv": str(esg_csv),
                    "riskfree_csv": str(rf_csv),
                    "window": 8,
                    "strategies": ["Sample", "1/N"],
                }
            },
        )
        out = tmp_path / "b"
        assert main(["backtest", "--config", str(cfg), "--out", str(out)]) == 0
        text = (out / "report.csv").read_text()
        sample_line = [l for l in text.splitlines() if l.startswith("Sample")][0]
        assert sample_line == "Sample,-,-,-,-,-,-"


class TestConfigValidation:
    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_config(
            tmp_path,
            {"simulate": {"synthetic": {"p": 8, "seed": 1}, "seed": 1, "repz": 5}},
        )
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_section(self, tmp_path):
        cfg = write_config(tmp_path, {"calibrate": {}})
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert (
            main(["simulate", "--config", str(tmp_path / "none.yaml"), "--out", str(tmp_path)])
            == 2
        )

    def test_bad_yaml(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("simulate: [unclosed", encoding="utf-8")
        assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


class TestExitCodes:
    def test_computation_failure_exit_1(self, tmp_path, capsys):
        # p larger than the model's universe -> computation error, exit 1
        from esg_regmv.simulation import save_population, synthetic_population

        model = tmp_path / "m.npz"
        save_population(model, synthetic_population(6, seed=2))
        cfg = write_config(
            tmp_path,
            {
                "simulate": {
                    "model": str(model),
                    "p": 10,
                    "t_obs": 20,
                    "reps": 1,
                    "seed": 4,
                    "strategies": ["Oracle"],
                }
            },
        )
        assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
        assert "error" in capsys.readouterr().err
