"""Stationary-measure estimation and the small-nu sweep.

A stationary ensemble is built by burning in a batch of trajectories, then
collecting observable samples (and field snapshots) at intervals of at
least one decorrelation time of the energy series.  Trajectories carry
disjoint counter-based noise streams, so the result is reproducible for a
fixed seed regardless of worker scheduling; reductions use numpy pairwise
summation.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import stats
from .fields import SphereField, load_field, save_field
from .integrator import (ConfigError, NoiseStream, NumericalBlowupError,
                         SimConfig, _noise_term, energy_ceiling,
                         observe_values, random_unit_field, stable_dt,
                         step_values)
from .noise import NoiseSpectrum, injection_rate, trajectory_rng

ENSEMBLE_FORMAT = "spinflow-ensemble v1"

#: observable columns of the ensemble sample table
SAMPLE_COLUMNS = ("traj", "t", "avg_sq", "energy", "centered_l2_sq",
                  "dissipation", "h2")

#: decorrelation interval cap, in recorded steps
INTERVAL_CAP = 100

#: records used to probe the energy autocorrelation before sampling
PROBE_RECORDS = 400

#: reserved trajectory id of the probe run (kept off the ensemble ids)
PROBE_TRAJ_ID = 2 ** 32 - 1


class EnsembleError(RuntimeError):
    """Ensemble construction or storage failure."""


@dataclass
class StationaryEnsemble:
    """Snapshots and decorrelated observable samples approximating the
    stationary law at one value of nu."""

    nu: float
    snapshots: list
    samples: dict            # column name -> array, see SAMPLE_COLUMNS
    meta: dict

    @property
    def n_samples(self) -> int:
        return len(self.samples["t"])

    def law(self, observable: str) -> stats.EmpiricalLaw:
        if observable not in self.samples:
            raise KeyError(f"unknown observable {observable!r}")
        return stats.EmpiricalLaw(self.samples[observable])

    def stationarity_check(self, max_sigma: float = 3.0) -> dict:
        """First-half vs second-half sample means, in combined SEs."""
        out = {}
        for name in ("avg_sq", "energy", "dissipation"):
            x = self.samples[name]
            half = len(x) // 2
            a, b = x[:half], x[half:]
            se = np.hypot(np.std(a) / np.sqrt(len(a)), np.std(b) / np.sqrt(len(b)))
            z = abs(np.mean(a) - np.mean(b)) / se if se > 0 else 0.0
            out[name] = {"z": float(z), "ok": bool(z < max_sigma)}
        return out


def default_burn_in(nu: float, spectrum: NoiseSpectrum) -> float:
    """20 dissipation times 1/(nu * injection)."""
    rate = injection_rate(spectrum)
    if nu <= 0.0 or rate <= 0.0:
        raise ConfigError("stationary estimation needs nu > 0 and active noise")
    return 20.0 / (nu * rate)


def _estimate_interval(cfg: SimConfig, u0: SphereField, burn_steps: int) -> int:
    """Decorrelation interval (in records) from a dedicated probe trajectory."""
    stream = NoiseStream(cfg.spectrum, cfg.seed, PROBE_TRAJ_ID)
    values = u0.values.copy()
    for _ in range(burn_steps):
        noise = _noise_term(cfg, stream, cfg.n_grid, batch=None)
        values = step_values(values, cfg.dt, cfg.nu, cfg.dx, noise, cfg.scheme)
    energies = np.empty(PROBE_RECORDS)
    for r in range(PROBE_RECORDS):
        for _ in range(cfg.record_stride):
            noise = _noise_term(cfg, stream, cfg.n_grid, batch=None)
            values = step_values(values, cfg.dt, cfg.nu, cfg.dx, noise, cfg.scheme)
        energies[r] = observe_values(values, cfg.dx)[1]
    if not np.all(np.isfinite(energies)) or \
            np.max(energies) > energy_ceiling(cfg.n_grid):
        raise NumericalBlowupError(step=burn_steps, dt=cfg.dt,
                                   partial="probe trajectory")
    tau = stats.integrated_autocorrelation(energies, cap=INTERVAL_CAP)
    return int(np.ceil(tau))


def _run_group(cfg: SimConfig, traj_ids, burn_steps: int, interval: int,
               events: int, snapshot_quota):
    """Burn in and sample one batch of trajectories (vectorized over them).

    Returns (rows, snapshots) where rows is a list of per-event sample
    arrays of shape (n_traj, 7) and snapshots maps (event, traj) to fields.
    """
    m = len(traj_ids)
    states = np.stack([
        random_unit_field(cfg.n_grid, trajectory_rng(cfg.seed, tid)).values
        for tid in traj_ids])
    streams = [NoiseStream(cfg.spectrum, cfg.seed, tid) for tid in traj_ids]
    dx = cfg.dx

    def advance(n_steps):
        nonlocal states
        for _ in range(n_steps):
            noise = _noise_term(cfg, streams, cfg.n_grid, batch=True)
            states = step_values(states, cfg.dt, cfg.nu, dx, noise, cfg.scheme)

    advance(burn_steps)
    rows, snaps = [], {}
    steps_per_event = interval * cfg.record_stride
    for event in range(events):
        advance(steps_per_event)
        t = (burn_steps + (event + 1) * steps_per_event) * cfg.dt
        obs = observe_values(states, dx)                    # (m, 5)
        bad_mask = ~np.isfinite(obs[:, 1]) | (obs[:, 1] > energy_ceiling(cfg.n_grid))
        if np.any(bad_mask):
            bad = int(np.argmax(bad_mask))
            raise NumericalBlowupError(
                step=burn_steps + (event + 1) * steps_per_event, dt=cfg.dt,
                partial=f"trajectory {traj_ids[bad]}")
        ids = np.asarray(traj_ids, dtype=float)
        rows.append(np.column_stack([ids, np.full(m, t), obs]))
        for k in range(m):
            if snapshot_quota(event, traj_ids[k]):
                snaps[(event, traj_ids[k])] = SphereField(states[k].copy())
    return rows, snaps


def estimate_stationary(cfg: SimConfig, n_samples: int, n_trajectories: int,
                        burn_in: float | None = None, threads: int = 1,
                        max_snapshots: int | None = None) -> StationaryEnsemble:
    """Time-averaged sampling of the stationary law at cfg.nu.

    Burns in every trajectory, estimates the decorrelation interval from a
    probe trajectory's energy autocorrelation (capped at INTERVAL_CAP
    records), then collects sampling events in which all trajectories
    contribute one observable sample each.
    """
    if cfg.nu <= 0.0:
        raise ConfigError("estimate_stationary requires nu > 0 (mixing)")
    if n_samples < 1 or n_trajectories < 1:
        raise ConfigError("n_samples and n_trajectories must be positive")
    if burn_in is None:
        burn_in = default_burn_in(cfg.nu, cfg.spectrum)
    burn_steps = int(np.ceil(burn_in / cfg.dt))
    u0 = random_unit_field(cfg.n_grid, trajectory_rng(cfg.seed, PROBE_TRAJ_ID))
    interval = _estimate_interval(cfg, u0, burn_steps)
    events = int(np.ceil(n_samples / n_trajectories))
    if max_snapshots is None:
        max_snapshots = n_samples

    def snapshot_quota(event, traj_id):
        return event * n_trajectories + traj_id < max_snapshots

    traj_ids = list(range(n_trajectories))
    threads = max(1, min(threads, n_trajectories))
    groups = [traj_ids[g::threads] for g in range(threads)]
    if threads == 1:
        results = [_run_group(cfg, groups[0], burn_steps, interval, events,
                              snapshot_quota)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_group, cfg, g, burn_steps, interval,
                                   events, snapshot_quota) for g in groups]
            results = [f.result() for f in futures]

    all_rows = [row for rows, _ in results for row in rows]
    table = np.vstack(all_rows)
    order = np.lexsort((table[:, 0], table[:, 1]))          # by (t, traj)
    table = table[order][:n_samples]
    samples = {name: table[:, i].copy() for i, name in enumerate(SAMPLE_COLUMNS)}
    samples["traj"] = samples["traj"].astype(int)

    snap_map = {}
    for _, snaps in results:
        snap_map.update(snaps)
    snapshots = [snap_map[key] for key in sorted(snap_map)
                 if key[0] * n_trajectories + key[1] < n_samples]

    meta = {
        "format": ENSEMBLE_FORMAT,
        "nu": cfg.nu, "dt": cfg.dt, "n_grid": cfg.n_grid, "seed": cfg.seed,
        "scheme": cfg.scheme, "record_stride": cfg.record_stride,
        "spectrum": {"modes": cfg.spectrum.modes.tolist(),
                     "lambdas": cfg.spectrum.lambdas.tolist()},
        "burn_in": float(burn_in), "burn_steps": burn_steps,
        "interval_records": interval, "events": events,
        "n_trajectories": n_trajectories, "n_samples_requested": n_samples,
    }
    ens = StationaryEnsemble(nu=cfg.nu, snapshots=snapshots, samples=samples,
                             meta=meta)
    meta["stationarity"] = ens.stationarity_check()
    return ens


# ---------------------------------------------------------------------------
# the small-nu ladder
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    """Per-nu summary statistics over a decreasing ladder of nu values."""

    nus: np.ndarray
    rows: list                # dict per nu; 'error' key on failure

    def trending_keys(self, factor: float = 4.0) -> list:
        """Statistics growing monotonically by more than `factor` across the
        ladder; nonempty output contradicts the uniform-in-nu bounds."""
        out = []
        ok = [r for r in self.rows if "error" not in r]
        if len(ok) < 2:
            return out
        for key in ("mean_energy", "mean_h2", "sup_occupation_density",
                    "small_ball_sup_ratio"):
            vals = [r[key] for r in ok]
            diffs = np.diff(vals)
            if (np.all(diffs > 0) or np.all(diffs < 0)) and \
                    max(vals) > factor * max(min(vals), 1e-300):
                out.append(key)
        return out


def summarize_ensemble(ens: StationaryEnsemble, spectrum: NoiseSpectrum,
                       nu: float) -> dict:
    energy = ens.samples["energy"]
    centered = np.sqrt(np.maximum(ens.samples["centered_l2_sq"], 0.0))
    row = {
        "nu": nu,
        "n_samples": ens.n_samples,
        "balance_residual": stats.balance_residual_of_samples(
            ens.samples["dissipation"], spectrum),
        "mean_energy": float(np.mean(energy)),
        "mean_dissipation": float(np.mean(ens.samples["dissipation"])),
        "mean_h2": float(np.mean(ens.samples["h2"])),
    }
    try:
        slope, r_sq = stats.gaussian_tail_fit(stats.EmpiricalLaw(energy))
        row["tail_slope"], row["tail_fit_r2"] = slope, r_sq
    except stats.EstimatorError:
        row["tail_slope"] = row["tail_fit_r2"] = float("nan")
    anchor = float(np.quantile(centered, 0.25))
    eps = anchor * np.logspace(-2.0, 0.0, 9)
    row["small_ball_sup_ratio"] = float(
        np.max(stats.small_ball_ratio(stats.EmpiricalLaw(centered), eps)))
    hist = stats.occupation_density_of_samples(
        energy, bin_width=max(np.std(energy), 1e-12) / 10.0)
    row["sup_occupation_density"] = hist.sup_density()
    if ens.snapshots:
        dets = np.array([stats.diffusion_matrix(s, spectrum, nu).det()
                         for s in ens.snapshots])
        row["det_sigma_q10"] = float(np.quantile(dets, 0.10))
        row["det_sigma_q50"] = float(np.quantile(dets, 0.50))
        row["det_sigma_q90"] = float(np.quantile(dets, 0.90))
    return row


def inviscid_sweep(base_cfg: SimConfig, nus, n_samples: int,
                   n_trajectories: int, threads: int = 1) -> SweepResult:
    """Run estimate_stationary per nu (dt adapted) and summarize each.

    Per-nu failures are recorded and the sweep continues.
    """
    nus = np.asarray(nus, dtype=float)
    if np.any(nus <= 0.0) or np.any(nus > 1.0):
        raise ConfigError("sweep nus must lie in (0, 1]")
    if len(nus) > 1 and np.any(np.diff(nus) >= 0.0):
        raise ConfigError("sweep nus must be strictly decreasing")
    rows = []
    for nu in nus:
        cfg = replace(base_cfg, nu=float(nu),
                      dt=stable_dt(float(nu), base_cfg.n_grid))
        try:
            ens = estimate_stationary(cfg, n_samples, n_trajectories,
                                      threads=threads)
            rows.append(summarize_ensemble(ens, cfg.spectrum, float(nu)))
        except (NumericalBlowupError, EnsembleError) as exc:
            rows.append({"nu": float(nu), "error": str(exc)})
    return SweepResult(nus=nus, rows=rows)


# ---------------------------------------------------------------------------
# storage: meta.json + fields/NNNN.csv + observables.csv
# ---------------------------------------------------------------------------

def save_ensemble(directory, ens: StationaryEnsemble) -> None:
    os.makedirs(directory, exist_ok=True)
    fields_dir = os.path.join(directory, "fields")
    os.makedirs(fields_dir, exist_ok=True)
    meta = dict(ens.meta)
    meta["n_snapshots"] = len(ens.snapshots)
    meta["n_samples"] = ens.n_samples
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(directory, "observables.csv"), "w", newline="\n") as fh:
        fh.write(",".join(SAMPLE_COLUMNS) + "\n")
        for i in range(ens.n_samples):
            row = [f"{int(ens.samples['traj'][i])}"]
            row += [f"{ens.samples[c][i]:.17g}" for c in SAMPLE_COLUMNS[1:]]
            fh.write(",".join(row) + "\n")
    for i, snap in enumerate(ens.snapshots):
        save_field(os.path.join(fields_dir, f"{i:04d}.csv"), snap)


def load_ensemble(directory) -> StationaryEnsemble:
    meta_path = os.path.join(directory, "meta.json")
    obs_path = os.path.join(directory, "observables.csv")
    if not (os.path.isfile(meta_path) and os.path.isfile(obs_path)):
        raise EnsembleError(f"not an ensemble directory: {directory}")
    with open(meta_path) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise EnsembleError(f"corrupt meta.json: {exc}") from exc
    if meta.get("format") != ENSEMBLE_FORMAT:
        raise EnsembleError(f"unsupported ensemble format {meta.get('format')!r}")
    with open(obs_path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != SAMPLE_COLUMNS:
            raise EnsembleError(f"unexpected observables header {header}")
        try:
            table = np.array([[float(v) for v in line.split(",")]
                              for line in fh if line.strip()])
        except ValueError as exc:
            raise EnsembleError(f"corrupt observables.csv: {exc}") from exc
    if table.ndim != 2 or table.shape[1] != len(SAMPLE_COLUMNS):
        raise EnsembleError("corrupt observables.csv: wrong column count")
    if table.shape[0] != meta.get("n_samples"):
        raise EnsembleError("observables.csv truncated")
    samples = {name: table[:, i].copy()
               for i, name in enumerate(SAMPLE_COLUMNS)}
    samples["traj"] = samples["traj"].astype(int)
    snapshots = []
    for i in range(meta.get("n_snapshots", 0)):
        path = os.path.join(directory, "fields", f"{i:04d}.csv")
        if not os.path.isfile(path):
            raise EnsembleError(f"missing snapshot {path}")
        snapshots.append(load_field(path))
    return StationaryEnsemble(nu=float(meta["nu"]), snapshots=snapshots,
                              samples=samples, meta=meta)


def spectrum_from_meta(meta: dict) -> NoiseSpectrum:
    spec = meta["spectrum"]
    return NoiseSpectrum(np.asarray(spec["modes"]), np.asarray(spec["lambdas"]))
