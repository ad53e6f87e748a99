import json

import numpy as np
import pytest

from spinflow.ensemble import (EnsembleError, estimate_stationary,
                               inviscid_sweep, load_ensemble, save_ensemble,
                               summarize_ensemble)
from spinflow.integrator import ConfigError, make_config
from spinflow.noise import NoiseSpectrum

SPEC = NoiseSpectrum.from_pairs([(1, 1.0)])


def small_cfg(nu=0.5, seed=19):
    return make_config(nu=nu, n_grid=32, horizon=0.0, seed=seed,
                       spectrum=SPEC, record_stride=10)


@pytest.fixture(scope="module")
def small_ensemble():
    return estimate_stationary(small_cfg(), n_samples=40, n_trajectories=4,
                               burn_in=4.0, max_snapshots=6)


class TestEstimation:
    def test_sample_count_and_columns(self, small_ensemble):
        ens = small_ensemble
        assert ens.n_samples == 40
        for name in ("traj", "t", "energy", "dissipation", "h2"):
            assert len(ens.samples[name]) == 40
        assert len(ens.snapshots) == 6

    def test_determinism_across_thread_counts(self):
        a = estimate_stationary(small_cfg(), n_samples=24, n_trajectories=4,
                                burn_in=4.0, threads=1)
        b = estimate_stationary(small_cfg(), n_samples=24, n_trajectories=4,
                                burn_in=4.0, threads=3)
        for name in ("traj", "t", "energy", "dissipation"):
            assert np.array_equal(a.samples[name], b.samples[name])

    def test_positive_energy_everywhere(self, small_ensemble):
        assert np.all(small_ensemble.samples["energy"] > 0.0)

    def test_stationarity_check_keys(self, small_ensemble):
        check = small_ensemble.stationarity_check()
        assert set(check) == {"avg_sq", "energy", "dissipation"}
        assert all("z" in v and "ok" in v for v in check.values())

    def test_rejects_inviscid(self):
        with pytest.raises(ConfigError):
            estimate_stationary(small_cfg(nu=0.0), 10, 2)

    def test_rejects_empty_request(self):
        with pytest.raises(ConfigError):
            estimate_stationary(small_cfg(), 0, 2)

    def test_law_accessor(self, small_ensemble):
        law = small_ensemble.law("energy")
        assert len(law.samples) == 40
        with pytest.raises(KeyError):
            small_ensemble.law("nope")


class TestStorage:
    def test_round_trip(self, small_ensemble, tmp_path):
        save_ensemble(tmp_path / "ens", small_ensemble)
        back = load_ensemble(tmp_path / "ens")
        assert back.nu == small_ensemble.nu
        for name in small_ensemble.samples:
            assert np.array_equal(back.samples[name],
                                  small_ensemble.samples[name])
        assert len(back.snapshots) == len(small_ensemble.snapshots)
        assert np.array_equal(back.snapshots[0].values,
                              small_ensemble.snapshots[0].values)

    def test_save_bytes_reproducible(self, small_ensemble, tmp_path):
        save_ensemble(tmp_path / "a", small_ensemble)
        save_ensemble(tmp_path / "b", small_ensemble)
        assert (tmp_path / "a" / "observables.csv").read_bytes() == \
               (tmp_path / "b" / "observables.csv").read_bytes()

    def test_truncated_observables_rejected(self, small_ensemble, tmp_path):
        save_ensemble(tmp_path / "ens", small_ensemble)
        obs = tmp_path / "ens" / "observables.csv"
        lines = obs.read_text().splitlines()
        obs.write_text("\n".join(lines[:-4]) + "\n")
        with pytest.raises(EnsembleError):
            load_ensemble(tmp_path / "ens")

    def test_corrupt_meta_rejected(self, small_ensemble, tmp_path):
        save_ensemble(tmp_path / "ens", small_ensemble)
        (tmp_path / "ens" / "meta.json").write_text("{not json")
        with pytest.raises(EnsembleError):
            load_ensemble(tmp_path / "ens")

    def test_missing_directory_rejected(self, tmp_path):
        with pytest.raises(EnsembleError):
            load_ensemble(tmp_path / "nothing")

    def test_missing_snapshot_rejected(self, small_ensemble, tmp_path):
        save_ensemble(tmp_path / "ens", small_ensemble)
        (tmp_path / "ens" / "fields" / "0000.csv").unlink()
        with pytest.raises(EnsembleError):
            load_ensemble(tmp_path / "ens")


class TestSweep:
    def test_nus_must_decrease(self):
        with pytest.raises(ConfigError):
            inviscid_sweep(small_cfg(), [0.1, 0.5], 10, 2)
        with pytest.raises(ConfigError):
            inviscid_sweep(small_cfg(), [0.5, 1.5], 10, 2)

    def test_single_nu_matches_stationary(self):
        sweep = inviscid_sweep(small_cfg(), [0.5], n_samples=24,
                               n_trajectories=4)
        cfg = small_cfg()
        ens = estimate_stationary(cfg, 24, 4)
        row = summarize_ensemble(ens, cfg.spectrum, 0.5)
        assert sweep.rows[0]["balance_residual"] == \
            pytest.approx(row["balance_residual"], rel=1e-12)
        assert sweep.rows[0]["mean_energy"] == \
            pytest.approx(row["mean_energy"], rel=1e-12)

    def test_trending_detector(self):
        from spinflow.ensemble import SweepResult

        def row(nu, scale):
            return {"nu": nu, "mean_energy": scale, "mean_h2": scale,
                    "sup_occupation_density": 1.0, "small_ball_sup_ratio": 1.0}

        flat = SweepResult(np.array([0.5, 0.25]), [row(0.5, 1.0), row(0.25, 1.1)])
        assert flat.trending_keys() == []
        steep = SweepResult(np.array([0.5, 0.25, 0.1]),
                            [row(0.5, 1.0), row(0.25, 3.0), row(0.1, 9.0)])
        assert "mean_energy" in steep.trending_keys()
