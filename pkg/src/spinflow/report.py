"""Analysis reports for a stored ensemble.

The report is a JSON document with keys tail, small_ball, occupation,
balance_residual and det_sigma_stats, plus CSV mirrors and rendered PNG
figures for each diagnostic.
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import stats
from .ensemble import StationaryEnsemble, spectrum_from_meta
from .noise import NoiseSpectrum


def analyze_ensemble(ens: StationaryEnsemble,
                     spectrum: NoiseSpectrum | None = None) -> dict:
    """Stationary-law diagnostics of one ensemble as a JSON-ready dict."""
    if spectrum is None:
        spectrum = spectrum_from_meta(ens.meta)
    energy = ens.samples["energy"]
    centered = np.sqrt(np.maximum(ens.samples["centered_l2_sq"], 0.0))

    law = stats.EmpiricalLaw(energy)
    lo = float(np.quantile(energy, 0.5))
    hi = float(np.quantile(energy, 0.995))
    if hi <= lo:
        hi = lo + max(abs(lo), 1.0) * 1e-6
    grid = np.linspace(lo, hi, 24)
    surv = stats.tail_survival(law, grid)
    keep = surv > 0.0
    tail = {"R": grid[keep].tolist(), "logP": np.log(surv[keep]).tolist()}
    try:
        slope, r_sq = stats.gaussian_tail_fit(law)
        tail["gaussian_slope"], tail["fit_r2"] = slope, r_sq
    except stats.EstimatorError:
        pass

    anchor = float(np.quantile(centered, 0.5))
    eps = anchor * np.logspace(-2.0, 0.0, 13)
    ratios = stats.small_ball_ratio(stats.EmpiricalLaw(centered), eps)
    small_ball = {"eps": eps.tolist(), "ratio": ratios.tolist()}

    bin_width = max(float(np.std(energy)), 1e-12) / 50.0
    hist = stats.occupation_density_of_samples(energy, bin_width)
    occupation = {"bins": hist.edges.tolist(), "density": hist.density.tolist()}

    report = {
        "nu": ens.nu,
        "n_samples": ens.n_samples,
        "tail": tail,
        "small_ball": small_ball,
        "occupation": occupation,
        "balance_residual": stats.balance_residual_of_samples(
            ens.samples["dissipation"], spectrum),
    }
    if ens.snapshots:
        dets = np.array([stats.diffusion_matrix(s, spectrum, ens.nu).det()
                         for s in ens.snapshots])
        bounds = np.array([stats.det_lower_bound(s, spectrum, ens.nu)
                           for s in ens.snapshots])
        report["det_sigma_stats"] = {
            "n_snapshots": len(dets),
            "min": float(np.min(dets)), "max": float(np.max(dets)),
            "q10": float(np.quantile(dets, 0.10)),
            "q50": float(np.quantile(dets, 0.50)),
            "q90": float(np.quantile(dets, 0.90)),
            "bound_violations": int(np.sum(
                dets - bounds < -1e-10 * np.maximum(dets, 1e-300))),
        }
    else:
        report["det_sigma_stats"] = {"n_snapshots": 0}
    return report


def _write_csv(path, header, columns) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*columns):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def write_report(directory, report: dict, render: bool = True) -> list:
    """Emit analysis.json, CSV mirrors and (optionally) PNG figures.

    Returns the list of files written, relative to the directory.
    """
    os.makedirs(directory, exist_ok=True)
    written = ["analysis.json"]
    with open(os.path.join(directory, "analysis.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    tail = report["tail"]
    _write_csv(os.path.join(directory, "tail.csv"),
               ("R", "logP"), (tail["R"], tail["logP"]))
    sb = report["small_ball"]
    _write_csv(os.path.join(directory, "small_ball.csv"),
               ("eps", "ratio"), (sb["eps"], sb["ratio"]))
    occ = report["occupation"]
    centers = 0.5 * (np.asarray(occ["bins"][:-1]) + np.asarray(occ["bins"][1:]))
    _write_csv(os.path.join(directory, "occupation.csv"),
               ("bin_center", "density"), (centers, occ["density"]))
    written += ["tail.csv", "small_ball.csv", "occupation.csv"]
    if render:
        written += render_figures(directory, report)
    return written


def render_figures(directory, report: dict) -> list:
    """Render one PNG per diagnostic next to the delimited output."""
    written = []

    def emit(name, draw):
        fig, ax = plt.subplots(figsize=(5.0, 3.4), dpi=120)
        draw(ax)
        fig.tight_layout()
        fig.savefig(os.path.join(directory, name))
        plt.close(fig)
        written.append(name)

    tail = report["tail"]

    def draw_tail(ax):
        r = np.asarray(tail["R"])
        ax.plot(r ** 2, -np.asarray(tail["logP"]), "o-", ms=3)
        if "gaussian_slope" in tail:
            ax.set_title(f"slope {tail['gaussian_slope']:.3g}, "
                         f"R2 {tail['fit_r2']:.3f}", fontsize=9)
        ax.set_xlabel(r"$R^2$")
        ax.set_ylabel(r"$-\log P(\|\partial u\|^2 > R)$")

    def draw_small_ball(ax):
        ax.loglog(report["small_ball"]["eps"],
                  np.maximum(report["small_ball"]["ratio"], 1e-300), "o-", ms=3)
        ax.set_xlabel(r"$\epsilon$")
        ax.set_ylabel(r"$P(\|u - \langle u\rangle\| < \epsilon)/\epsilon$")

    def draw_occupation(ax):
        occ = report["occupation"]
        edges = np.asarray(occ["bins"])
        ax.stairs(occ["density"], edges, fill=True, alpha=0.6)
        ax.set_xlabel(r"$\|\partial u\|^2$")
        ax.set_ylabel("occupation density")

    emit("tail.png", draw_tail)
    emit("small_ball.png", draw_small_ball)
    emit("occupation.png", draw_occupation)

    det = report.get("det_sigma_stats", {})
    if det.get("n_snapshots", 0) > 0:
        def draw_det(ax):
            qs = [det["min"], det["q10"], det["q50"], det["q90"], det["max"]]
            ax.semilogy(range(5), np.maximum(qs, 1e-300), "o-")
            ax.set_xticks(range(5),
                          ["min", "q10", "q50", "q90", "max"])
            ax.set_ylabel(r"$\det\sigma$ over snapshots")
        emit("det_sigma.png", draw_det)
    return written


def write_sweep_summary(directory, sweep) -> str:
    """sweep_summary.csv, one row per nu; failed rows carry the message."""
    os.makedirs(directory, exist_ok=True)
    keys = ["nu", "n_samples", "balance_residual", "mean_energy",
            "mean_dissipation", "mean_h2", "tail_slope", "tail_fit_r2",
            "small_ball_sup_ratio", "sup_occupation_density",
            "det_sigma_q10", "det_sigma_q50", "det_sigma_q90"]
    path = os.path.join(directory, "sweep_summary.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(keys + ["error"]) + "\n")
        for row in sweep.rows:
            cells = []
            for key in keys:
                value = row.get(key)
                cells.append("" if value is None else f"{value:.17g}")
            cells.append(str(row.get("error", "")).replace(",", ";"))
            fh.write(",".join(cells) + "\n")
    return path
