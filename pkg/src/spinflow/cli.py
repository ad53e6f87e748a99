"""spinflow command line: simulate / stationary / sweep / analyze / bcf.

Every run writes a manifest.json into its output directory holding the
config snapshot, seed, code version and wall times, which is enough to
reproduce the run bit-for-bit.

Exit codes: 0 success, 2 configuration error, 3 numerical blowup,
4 missing or corrupt input data.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
import time

from . import __version__, bcf, ensemble, report
from .config import ConfigError, RunConfig, load_config
from .ensemble import EnsembleError
from .fields import FieldError, load_field
from .integrator import (NumericalBlowupError, random_unit_field,
                         run_trajectory)
from .noise import trajectory_rng

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BLOWUP = 3
EXIT_DATA = 4


def _log(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SPINFLOW_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"SPINFLOW_THREADS={env!r} is not an integer") from exc
    return 1


def write_manifest(out_dir, args, cfg: RunConfig | None, started: float,
                   outputs: list) -> None:
    manifest = {
        "tool": "spinflow",
        "version": __version__,
        "command": args.command,
        "config_path": getattr(args, "config", None),
        "config": dict(cfg.raw) if cfg is not None else None,
        "seed": cfg.sim.seed if cfg is not None else args.seed,
        "threads": _threads(args),
        "started_unix": started,
        "finished_unix": time.time(),
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    os.makedirs(args.out, exist_ok=True)
    started = time.time()
    u0 = random_unit_field(cfg.sim.n_grid, trajectory_rng(cfg.sim.seed, 0))
    try:
        series = run_trajectory(u0, cfg.sim)
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    series_path = os.path.join(args.out, "series.csv")
    series.to_csv(series_path)
    write_manifest(args.out, args, cfg, started, ["series.csv"])
    _log(args, f"wrote {series_path} ({len(series)} records)")
    return EXIT_OK


def cmd_stationary(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    started = time.time()
    try:
        ens = ensemble.estimate_stationary(
            cfg.sim, cfg.n_samples, cfg.n_trajectories, burn_in=cfg.burn_in,
            threads=_threads(args), max_snapshots=cfg.max_snapshots)
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    ensemble.save_ensemble(args.out, ens)
    write_manifest(args.out, args, cfg, started,
                   ["meta.json", "observables.csv", "fields/"])
    _log(args, f"wrote ensemble of {ens.n_samples} samples to {args.out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config, seed_override=args.seed)
    os.makedirs(args.out, exist_ok=True)
    started = time.time()
    sweep = ensemble.inviscid_sweep(cfg.sim, cfg.nus, cfg.n_samples,
                                    cfg.n_trajectories, threads=_threads(args))
    path = report.write_sweep_summary(args.out, sweep)
    trending = sweep.trending_keys()
    write_manifest(args.out, args, cfg, started, ["sweep_summary.csv"])
    _log(args, f"wrote {path}")
    failures = [row for row in sweep.rows if "error" in row]
    for row in failures:
        print(f"warning: nu={row['nu']} failed: {row['error']}", file=sys.stderr)
    if trending:
        print(f"warning: statistics trending across the nu ladder: {trending}",
              file=sys.stderr)
    return EXIT_BLOWUP if len(failures) == len(sweep.rows) else EXIT_OK


def cmd_analyze(args) -> int:
    started = time.time()
    try:
        ens = ensemble.load_ensemble(args.ensemble)
    except (EnsembleError, FieldError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    rep = report.analyze_ensemble(ens)
    written = report.write_report(args.out, rep, render=not args.no_figures)
    write_manifest(args.out, args, None, started, written)
    _log(args, f"wrote {', '.join(written)} to {args.out}")
    return EXIT_OK


def cmd_bcf(args) -> int:
    started = time.time()
    paths = sorted(glob.glob(os.path.join(args.fields, "*.csv")))
    if os.path.isfile(args.fields):
        paths = [args.fields]
    if not paths:
        print(f"error: no field CSVs under {args.fields}", file=sys.stderr)
        return EXIT_DATA
    os.makedirs(args.out, exist_ok=True)
    outputs, rows = [], []
    for i, path in enumerate(paths):
        try:
            u = load_field(path)
        except (FieldError, OSError, ValueError) as exc:
            print(f"error: {path}: {exc}", file=sys.stderr)
            return EXIT_DATA
        curve = bcf.bcf_transform(u)
        checks = bcf.bcf_checks(u, curve)
        name = f"curve_{i:04d}.csv"
        bcf.save_curve(os.path.join(args.out, name), curve)
        outputs.append(name)
        rows.append((i, checks))
    checks_path = os.path.join(args.out, "bcf_checks.csv")
    with open(checks_path, "w", newline="\n") as fh:
        fh.write("frame,tangent_norm_sup_dev,d2_energy_residual,"
                 "d3_energy_residual,endpoint_residual\n")
        for i, c in rows:
            fh.write(f"{i},{c.tangent_norm_sup_dev:.17g},"
                     f"{c.d2_energy_residual:.17g},{c.d3_energy_residual:.17g},"
                     f"{c.endpoint_residual:.17g}\n")
    outputs.append("bcf_checks.csv")
    write_manifest(args.out, args, None, started, outputs)
    _log(args, f"wrote {len(rows)} curves and bcf_checks.csv to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinflow",
        description="Damped-driven sphere-valued flow simulator and "
                    "stationary-statistics test bench.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="seed override (unsigned 64-bit)")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: SPINFLOW_THREADS or 1)")
        p.add_argument("--quiet", action="store_true")

    p = sub.add_parser("simulate", help="integrate one trajectory")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stationary", help="estimate the stationary ensemble")
    common(p)
    p.set_defaults(func=cmd_stationary)

    p = sub.add_parser("sweep", help="stationary ensembles over a nu ladder")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="diagnostics of a stored ensemble")
    p.add_argument("--ensemble", required=True, help="ensemble directory")
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG rendering, emit JSON/CSV only")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bcf", help="lift stored fields to curves")
    p.add_argument("--fields", required=True,
                   help="field CSV or directory of field CSVs")
    common(p, needs_config=False)
    p.set_defaults(func=cmd_bcf)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalBlowupError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
