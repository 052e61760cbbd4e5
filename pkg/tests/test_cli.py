import json
import math
from pathlib import Path

import numpy as np
import pytest

from qreadout.cli import load_config_file, main, resolve_config


def run_cli(*args) -> int:
    return main(list(args))


def read_meta(out_dir: Path) -> dict:
    return json.loads((out_dir / "run_metadata.json").read_text())


def csv_columns(path: Path) -> dict:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: np.atleast_1d(data[name]) for name in data.dtype.names}


class TestConfigHandling:
    def test_ini_roundtrip(self, tmp_path):
        cfg_file = tmp_path / "run.ini"
        cfg_file.write_text("drive = 0.5\nseed = 11\nt_final = 1.5\n")
        settings = load_config_file(str(cfg_file))
        assert settings == {"drive": 0.5, "seed": 11, "t_final": 1.5}

    def test_json_config(self, tmp_path):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps({"scheme": "dispersive", "chi": 0.8}))
        settings = load_config_file(str(cfg_file))
        assert settings["chi"] == 0.8

    def test_unknown_key_rejected(self, tmp_path):
        cfg_file = tmp_path / "run.ini"
        cfg_file.write_text("banana = 1\n")
        from qreadout.errors import ConfigError

        with pytest.raises(ConfigError):
            load_config_file(str(cfg_file))

    def test_cli_flags_override_file(self, tmp_path):
        cfg_file = tmp_path / "run.ini"
        cfg_file.write_text("seed = 1\ndt = 0.01\n")
        args = type("A", (), {"config": str(cfg_file), "seed": 5, "dt": None,
                              "scheme": None, "threads": 1})()
        cfg, _ = resolve_config(args)
        assert cfg.seed == 5 and cfg.dt == 0.01

    def test_default_lo_phase_follows_scheme(self, tmp_path):
        args = type("A", (), {"config": None, "seed": None, "dt": None,
                              "scheme": "dispersive", "threads": 1})()
        cfg, _ = resolve_config(args)
        assert cfg.phi_lo == 0.0
        args2 = type("A", (), {"config": None, "seed": None, "dt": None,
                               "scheme": "longitudinal", "threads": 1})()
        cfg2, _ = resolve_config(args2)
        assert cfg2.phi_lo == pytest.approx(math.pi / 2)


class TestExitCodes:
    def test_missing_config_file(self, tmp_path):
        assert run_cli("figure1", "--config", str(tmp_path / "nope.ini"),
                       "--out", str(tmp_path)) == 1

    def test_bad_value(self, tmp_path):
        cfg_file = tmp_path / "bad.ini"
        cfg_file.write_text("kappa = -1\n")
        assert run_cli("figure1", "--config", str(cfg_file),
                       "--out", str(tmp_path)) == 1

    def test_bad_flag_usage(self, tmp_path):
        assert run_cli("trajectory", "--engine", "warp",
                       "--out", str(tmp_path)) == 1

    def test_invariant_violation_exit_code(self, tmp_path):
        cfg_file = tmp_path / "coarse.ini"
        # huge step with strong drive: the reduced-state projection guard
        # trips and the run must exit 2
        cfg_file.write_text("dt = 0.4\nt_final = 40\ndrive = 6\nseed = 0\n")
        assert run_cli("trajectory", "--config", str(cfg_file),
                       "--out", str(tmp_path)) == 2

    def test_success(self, tmp_path):
        cfg_file = tmp_path / "ok.ini"
        cfg_file.write_text("t_final = 0.2\n")
        assert run_cli("trajectory", "--config", str(cfg_file),
                       "--out", str(tmp_path)) == 0


class TestOutputs:
    def test_figure1_outputs(self, tmp_path):
        out = tmp_path / "fig"
        assert run_cli("figure1", "--out", str(out)) == 0
        for name in ("eta.csv", "d_curve.csv", "snr.csv", "snr_scaled.csv"):
            assert (out / name).exists()
        meta = read_meta(out)
        assert meta["command"] == "figure1"
        assert set(meta["outputs"]) == {"eta.csv", "d_curve.csv", "snr.csv",
                                        "snr_scaled.csv"}
        eta = csv_columns(out / "eta.csv")
        assert np.all(np.isfinite(eta["eta_longitudinal"]))
        assert eta["eta_dispersive_chi_0p8"].max() > 1.0

    def test_trajectory_outputs_finite(self, tmp_path):
        out = tmp_path / "tr"
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 0.3\nseed = 4\n")
        assert run_cli("trajectory", "--config", str(cfg_file),
                       "--out", str(out)) == 0
        cols = csv_columns(out / "trajectory.csv")
        for name, col in cols.items():
            assert np.all(np.isfinite(col)), name
        assert (out / "record.csv").exists()

    def test_full_engine_trajectory(self, tmp_path):
        out = tmp_path / "trf"
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 0.2\nn_max = 8\nseed = 4\n")
        assert run_cli("trajectory", "--engine", "full", "--config",
                       str(cfg_file), "--out", str(out)) == 0
        cols = csv_columns(out / "trajectory.csv")
        assert "sigma_z" in cols
        assert np.all(np.isfinite(cols["sigma_z"]))

    def test_ensemble_outputs(self, tmp_path):
        out = tmp_path / "en"
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 0.5\nseed = 8\n")
        assert run_cli("ensemble", "--n-traj", "150", "--config",
                       str(cfg_file), "--out", str(out)) == 0
        meta = read_meta(out)
        assert meta["results"]["n_traj"] == 150
        assert meta["results"]["snr_empirical"] > 0
        cols = csv_columns(out / "ensemble.csv")
        assert np.all(np.isfinite(cols["mean_rho_ee"]))

    def test_bayes_verify_distance_small(self, tmp_path):
        out = tmp_path / "bv"
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 1.0\nseed = 12\n")
        assert run_cli("bayes-verify", "--config", str(cfg_file),
                       "--out", str(out)) == 0
        result = json.loads((out / "bayes_verify.json").read_text())
        assert result["trace_distance"] < 1e-2
        assert (out / "record.csv").exists()

    def test_bayes_verify_on_existing_record(self, tmp_path):
        gen = tmp_path / "gen"
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 0.4\nseed = 3\n")
        assert run_cli("bayes-verify", "--config", str(cfg_file),
                       "--out", str(gen)) == 0
        reuse = tmp_path / "reuse"
        assert run_cli("bayes-verify", "--config", str(cfg_file),
                       "--record", str(gen / "record.csv"),
                       "--out", str(reuse)) == 0
        r1 = json.loads((gen / "bayes_verify.json").read_text())
        r2 = json.loads((reuse / "bayes_verify.json").read_text())
        assert r2["trace_distance"] == pytest.approx(r1["trace_distance"],
                                                     rel=1e-9)

    def test_reset_demo(self, tmp_path):
        out = tmp_path / "rd"
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("seed = 3\n")
        assert run_cli("reset-demo", "--measure-time", "1.0", "--config",
                       str(cfg_file), "--out", str(out)) == 0
        meta = read_meta(out)
        assert meta["results"]["pre_reset_purity"] < 1.0
        assert meta["results"]["post_reset_purity"] == pytest.approx(
            1.0, abs=1e-10)
        cols = csv_columns(out / "purity.csv")
        assert np.all(np.isfinite(cols["purity"]))
        # purity dips during measurement and recovers at the reset
        assert cols["purity"].min() < 0.999


class TestDeterminism:
    def _compare_dirs(self, a: Path, b: Path):
        csvs = sorted(p.name for p in a.glob("*.csv"))
        assert csvs == sorted(p.name for p in b.glob("*.csv"))
        for name in csvs:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name
        ma = json.loads((a / "run_metadata.json").read_text())
        mb = json.loads((b / "run_metadata.json").read_text())
        ma.pop("wall_time_s")
        mb.pop("wall_time_s")
        assert ma == mb

    def test_trajectory_rerun_identical(self, tmp_path):
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 0.3\nseed = 17\n")
        for sub in ("a", "b"):
            assert run_cli("trajectory", "--config", str(cfg_file),
                           "--out", str(tmp_path / sub)) == 0
        self._compare_dirs(tmp_path / "a", tmp_path / "b")

    def test_multithreaded_ensemble_identical(self, tmp_path):
        cfg_file = tmp_path / "cfg.ini"
        cfg_file.write_text("t_final = 0.3\nseed = 17\n")
        assert run_cli("ensemble", "--n-traj", "300", "--threads", "1",
                       "--config", str(cfg_file),
                       "--out", str(tmp_path / "t1")) == 0
        assert run_cli("ensemble", "--n-traj", "300", "--threads", "2",
                       "--config", str(cfg_file),
                       "--out", str(tmp_path / "t2")) == 0
        for name in ("ensemble.csv", "q_samples.csv"):
            assert (tmp_path / "t1" / name).read_bytes() == \
                (tmp_path / "t2" / name).read_bytes()
