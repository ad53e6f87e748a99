import json

import numpy as np
import pytest

from spinflow.cli import main

BASE_CFG = """\
sim.nu = 0.5
sim.n_grid = 32
sim.horizon = 0.5
sim.seed = 7
noise.profile = custom
noise.custom = 1:1.0
ensemble.n_samples = 20
ensemble.n_trajectories = 4
ensemble.burn_in = 3.0
ensemble.max_snapshots = 4
"""


@pytest.fixture()
def cfg_path(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(BASE_CFG)
    return path


def run(*argv):
    return main([str(a) for a in argv])


class TestSimulate:
    def test_success_writes_series_and_manifest(self, cfg_path, tmp_path):
        out = tmp_path / "sim"
        assert run("simulate", "--config", cfg_path, "--out", out,
                   "--quiet") == 0
        assert (out / "series.csv").exists()
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["seed"] == 7
        assert manifest["config"]["sim.nu"] == "0.5"

    def test_determinism_byte_identical(self, cfg_path, tmp_path):
        run("simulate", "--config", cfg_path, "--out", tmp_path / "a", "--quiet")
        run("simulate", "--config", cfg_path, "--out", tmp_path / "b", "--quiet")
        assert (tmp_path / "a" / "series.csv").read_bytes() == \
               (tmp_path / "b" / "series.csv").read_bytes()

    def test_seed_override_changes_output(self, cfg_path, tmp_path):
        run("simulate", "--config", cfg_path, "--out", tmp_path / "a", "--quiet")
        run("simulate", "--config", cfg_path, "--out", tmp_path / "c",
            "--seed", 8, "--quiet")
        assert (tmp_path / "a" / "series.csv").read_bytes() != \
               (tmp_path / "c" / "series.csv").read_bytes()

    def test_dt_above_bound_exits_2(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        dx2 = (2.0 * np.pi / 32) ** 2
        path.write_text(BASE_CFG + f"sim.dt = {2.0 * dx2}\n")
        assert run("simulate", "--config", path, "--out", tmp_path / "o") == 2
        assert "stability bound" in capsys.readouterr().err

    def test_missing_config_exits_2(self, tmp_path):
        assert run("simulate", "--config", tmp_path / "none.cfg",
                   "--out", tmp_path / "o") == 2

    def test_unstable_dt_within_hard_bound_exits_3(self, tmp_path):
        path = tmp_path / "hot.cfg"
        dx2 = (2.0 * np.pi / 64) ** 2
        path.write_text("sim.nu = 0.0\nsim.n_grid = 64\nsim.horizon = 2.0\n"
                        f"sim.dt = {0.9 * dx2}\n"
                        "noise.profile = custom\nnoise.custom = 1:0.0\n")
        assert run("simulate", "--config", path, "--out", tmp_path / "o",
                   "--quiet") == 3


@pytest.fixture(scope="module")
def ensemble_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = root / "run.cfg"
    cfg.write_text(BASE_CFG)
    out = root / "ens"
    assert main(["stationary", "--config", str(cfg), "--out", str(out),
                 "--quiet"]) == 0
    return out


class TestPipeline:
    def test_stationary_layout(self, ensemble_dir):
        assert (ensemble_dir / "meta.json").exists()
        assert (ensemble_dir / "observables.csv").exists()
        assert (ensemble_dir / "fields" / "0000.csv").exists()

    def test_analyze_outputs(self, ensemble_dir, tmp_path):
        out = tmp_path / "rep"
        assert run("analyze", "--ensemble", ensemble_dir, "--out", out,
                   "--quiet") == 0
        report = json.loads((out / "analysis.json").read_text())
        for key in ("tail", "small_ball", "occupation", "balance_residual",
                    "det_sigma_stats"):
            assert key in report
        for name in ("tail.csv", "small_ball.csv", "occupation.csv",
                     "tail.png", "small_ball.png", "occupation.png"):
            assert (out / name).exists()

    def test_analyze_reproducible(self, ensemble_dir, tmp_path):
        run("analyze", "--ensemble", ensemble_dir, "--out", tmp_path / "r1",
            "--no-figures", "--quiet")
        run("analyze", "--ensemble", ensemble_dir, "--out", tmp_path / "r2",
            "--no-figures", "--quiet")
        assert (tmp_path / "r1" / "analysis.json").read_bytes() == \
               (tmp_path / "r2" / "analysis.json").read_bytes()

    def test_analyze_no_figures(self, ensemble_dir, tmp_path):
        out = tmp_path / "rep"
        run("analyze", "--ensemble", ensemble_dir, "--out", out,
            "--no-figures", "--quiet")
        assert not (out / "tail.png").exists()

    def test_analyze_missing_input_exits_4(self, tmp_path):
        assert run("analyze", "--ensemble", tmp_path / "none",
                   "--out", tmp_path / "rep") == 4

    def test_bcf_one_curve_per_frame(self, ensemble_dir, tmp_path):
        out = tmp_path / "curves"
        assert run("bcf", "--fields", ensemble_dir / "fields", "--out", out,
                   "--quiet") == 0
        frames = sorted(p.name for p in out.glob("curve_*.csv"))
        n_fields = len(list((ensemble_dir / "fields").glob("*.csv")))
        assert len(frames) == n_fields
        assert (out / "bcf_checks.csv").exists()

    def test_bcf_missing_input_exits_4(self, tmp_path):
        assert run("bcf", "--fields", tmp_path / "none", "--out",
                   tmp_path / "curves") == 4


class TestSweep:
    def test_single_nu_sweep(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(BASE_CFG + "ensemble.nus = 0.5\n")
        out = tmp_path / "sweep"
        assert run("sweep", "--config", cfg, "--out", out, "--quiet") == 0
        lines = (out / "sweep_summary.csv").read_text().splitlines()
        assert len(lines) == 2
        header = lines[0].split(",")
        row = dict(zip(header, lines[1].split(",")))
        assert float(row["nu"]) == 0.5
        assert abs(float(row["balance_residual"])) < 1.0


class TestThreads:
    def test_env_var_honored(self, cfg_path, tmp_path, monkeypatch):
        monkeypatch.setenv("SPINFLOW_THREADS", "2")
        out = tmp_path / "ens"
        assert run("stationary", "--config", cfg_path, "--out", out,
                   "--quiet") == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["threads"] == 2

    def test_threads_do_not_change_results(self, cfg_path, tmp_path):
        run("stationary", "--config", cfg_path, "--out", tmp_path / "t1",
            "--threads", 1, "--quiet")
        run("stationary", "--config", cfg_path, "--out", tmp_path / "t4",
            "--threads", 4, "--quiet")
        assert (tmp_path / "t1" / "observables.csv").read_bytes() == \
               (tmp_path / "t4" / "observables.csv").read_bytes()

    def test_bad_thread_count_exits_2(self, cfg_path, tmp_path):
        assert run("simulate", "--config", cfg_path, "--out", tmp_path / "o",
                   "--threads", 0) == 2
