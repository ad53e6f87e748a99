"""Flat key=value run configuration.

The format is plain text, one dotted key per line (sim.*, noise.*,
ensemble.*), '#' comments, locale-independent numbers.  Flat text keeps
experiment sweeps diff-friendly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .integrator import ConfigError, SimConfig, stable_dt
from .noise import NoiseSpectrum, SpectrumError, default_truncation

SIM_KEYS = {"nu", "dt", "n_grid", "horizon", "seed", "scheme", "record_stride"}
NOISE_KEYS = {"J", "profile", "exponent", "lambda0", "custom"}
ENSEMBLE_KEYS = {"n_samples", "n_trajectories", "burn_in", "nus",
                 "max_snapshots"}

DEFAULT_NUS = (0.5, 0.25, 0.1, 0.05)


@dataclass
class RunConfig:
    """Parsed configuration for every subcommand."""

    sim: SimConfig
    n_samples: int = 200
    n_trajectories: int = 16
    burn_in: float | None = None
    nus: tuple = DEFAULT_NUS
    max_snapshots: int | None = None
    raw: dict = field(default_factory=dict)


def parse_kv_text(text: str) -> dict:
    """key=value lines to a flat dict of strings; '#' starts a comment."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _coerce(key: str, value: str, kind):
    try:
        return kind(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def _parse_custom(value: str):
    """Custom spectrum syntax: semicolon- or space-separated j:lambda pairs."""
    pairs = []
    for token in value.replace(";", " ").split():
        if ":" not in token:
            raise ConfigError(f"noise.custom entry {token!r} is not j:lambda")
        j, lam = token.split(":", 1)
        pairs.append((_coerce("noise.custom", j, int),
                      _coerce("noise.custom", lam, float)))
    if not pairs:
        raise ConfigError("noise.custom must list at least one j:lambda pair")
    return pairs


def _parse_nus(value: str):
    nus = tuple(_coerce("ensemble.nus", tok, float)
                for tok in value.replace(",", " ").split())
    if not nus:
        raise ConfigError("ensemble.nus must list at least one value")
    return nus


def build_spectrum(entries: dict, n_grid: int) -> NoiseSpectrum:
    profile = entries.get("profile", "power")
    try:
        if profile == "power":
            truncation = int(entries.get("J", default_truncation(n_grid)))
            return NoiseSpectrum.power(
                truncation,
                exponent=float(entries.get("exponent", 2.0)),
                lambda0=float(entries.get("lambda0", 0.0)))
        if profile == "custom":
            if "custom" not in entries:
                raise ConfigError("noise.profile=custom requires noise.custom")
            return NoiseSpectrum.from_pairs(_parse_custom(entries["custom"]))
    except SpectrumError as exc:
        raise ConfigError(str(exc)) from exc
    raise ConfigError(f"unknown noise.profile {profile!r} (power or custom)")


def build_config(entries: dict, seed_override: int | None = None) -> RunConfig:
    """Assemble a RunConfig from flat entries; dt defaults to the dt(nu) rule."""
    groups = {"sim": {}, "noise": {}, "ensemble": {}}
    for key, value in entries.items():
        if "." not in key:
            raise ConfigError(f"key {key!r} lacks a section prefix")
        section, name = key.split(".", 1)
        known = {"sim": SIM_KEYS, "noise": NOISE_KEYS,
                 "ensemble": ENSEMBLE_KEYS}.get(section)
        if known is None:
            raise ConfigError(f"unknown section {section!r} in key {key!r}")
        if name not in known:
            raise ConfigError(f"unknown key {key!r}")
        groups[section][name] = value

    sim = groups["sim"]
    nu = _coerce("sim.nu", sim.get("nu", "0.5"), float)
    n_grid = _coerce("sim.n_grid", sim.get("n_grid", "256"), int)
    spectrum = build_spectrum(groups["noise"], n_grid)
    dt = (_coerce("sim.dt", sim["dt"], float) if "dt" in sim
          else stable_dt(nu, n_grid))
    seed = (seed_override if seed_override is not None
            else _coerce("sim.seed", sim.get("seed", "0"), int))
    sim_cfg = SimConfig(
        nu=nu, dt=dt, n_grid=n_grid,
        horizon=_coerce("sim.horizon", sim.get("horizon", "1.0"), float),
        seed=seed, spectrum=spectrum,
        scheme=sim.get("scheme", "rotation_heun"),
        record_stride=_coerce("sim.record_stride",
                              sim.get("record_stride", "10"), int))

    ens = groups["ensemble"]
    nus = _parse_nus(ens["nus"]) if "nus" in ens else DEFAULT_NUS
    if np.any(np.diff(nus) >= 0.0):
        raise ConfigError("ensemble.nus must be strictly decreasing")
    burn_in = (_coerce("ensemble.burn_in", ens["burn_in"], float)
               if "burn_in" in ens else None)
    if burn_in is not None and burn_in < 0.0:
        raise ConfigError("ensemble.burn_in must be nonnegative")
    max_snapshots = (_coerce("ensemble.max_snapshots", ens["max_snapshots"], int)
                     if "max_snapshots" in ens else None)
    cfg = RunConfig(
        sim=sim_cfg,
        n_samples=_coerce("ensemble.n_samples", ens.get("n_samples", "200"), int),
        n_trajectories=_coerce("ensemble.n_trajectories",
                               ens.get("n_trajectories", "16"), int),
        burn_in=burn_in, nus=nus, max_snapshots=max_snapshots, raw=dict(entries))
    if cfg.n_samples < 1 or cfg.n_trajectories < 1:
        raise ConfigError("ensemble.n_samples and n_trajectories must be >= 1")
    return cfg


def load_config(path, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return build_config(parse_kv_text(text), seed_override)
