"""Estimators for the stationary-law diagnostics.

Everything here is a pure function of immutable sample arrays: empirical
tails and small-ball ratios, occupation (time-average) densities, the 2x2
diffusion matrix of the observable pair (|<u>|^2, ||d_x u||^2) with its
determinant lower bound, and the stationary energy-balance residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields
from .fields import SphereField
from .integrator import ObservableSeries
from .noise import NoiseSpectrum, injection_rate


class EstimatorError(ValueError):
    """Invalid estimator input."""


@dataclass(frozen=True)
class EmpiricalLaw:
    """Weighted scalar samples standing in for a pushforward law."""

    samples: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1 or s.size == 0:
            raise EstimatorError("samples must be a nonempty 1-d array")
        if not np.all(np.isfinite(s)):
            raise EstimatorError("samples must be finite")
        w = self.weights
        if w is not None:
            w = np.asarray(w, dtype=float)
            if w.shape != s.shape or np.any(w < 0.0):
                raise EstimatorError("weights must be nonnegative and match samples")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "weights", w)

    def _normalized_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.samples.shape, 1.0 / self.samples.size)
        return self.weights / np.sum(self.weights)


def tail_survival(law: EmpiricalLaw, thresholds) -> np.ndarray:
    """Empirical P(X > R) for each threshold R."""
    thresholds = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(thresholds) <= 0.0):
        raise EstimatorError("thresholds must be strictly increasing")
    w = law._normalized_weights()
    return np.array([float(np.sum(w[law.samples > r])) for r in thresholds])


def gaussian_tail_fit(law: EmpiricalLaw, lo_quantile: float = 0.5,
                      hi_quantile: float = 0.995, n_points: int = 24):
    """Regress -log P(X > R) on R^2 over the populated tail.

    Returns (slope, r_squared).  A Gaussian-decay law has positive slope
    and a near-linear fit.
    """
    lo = float(np.quantile(law.samples, lo_quantile))
    hi = float(np.quantile(law.samples, hi_quantile))
    if hi <= lo:
        raise EstimatorError("degenerate sample range for tail fit")
    grid = np.linspace(lo, hi, n_points)
    surv = tail_survival(law, grid)
    keep = surv > 0.0
    x = grid[keep] ** 2
    y = -np.log(surv[keep])
    if len(x) < 3:
        raise EstimatorError("too few populated tail points")
    slope, intercept = np.polyfit(x, y, 1)
    fitted = slope * x + intercept
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r_sq = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(r_sq)


def small_ball_ratio(law: EmpiricalLaw, epsilons) -> np.ndarray:
    """P(X < eps) / eps per epsilon; bounded ratios mean linear scaling."""
    epsilons = np.asarray(epsilons, dtype=float)
    if np.any(epsilons <= 0.0):
        raise EstimatorError("epsilons must be positive")
    w = law._normalized_weights()
    return np.array([float(np.sum(w[law.samples < e])) / e for e in epsilons])


def small_ball_diverges(law: EmpiricalLaw, epsilons, factor: float = 2.0) -> bool:
    """Flag super-linear small-ball mass: the ratio grows as eps shrinks.

    epsilons must span at least two decades; the ratios over the smallest
    decade are compared against those over the largest.
    """
    epsilons = np.sort(np.asarray(epsilons, dtype=float))[::-1]
    if epsilons[0] / epsilons[-1] < 99.0:
        raise EstimatorError("epsilons must span at least two decades")
    ratios = small_ball_ratio(law, epsilons)
    top = epsilons >= epsilons[0] / 10.0
    bottom = epsilons <= epsilons[-1] * 10.0
    top_level = float(np.max(ratios[top]))
    bottom_level = float(np.max(ratios[bottom]))
    floor = 1.0 / (len(law.samples) * epsilons[0])   # one-sample resolution
    return bottom_level > factor * max(top_level, floor)


# ---------------------------------------------------------------------------
# occupation densities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OccupationHistogram:
    """Normalized density per unit length over uniform bins."""

    edges: np.ndarray
    density: np.ndarray

    @property
    def bin_width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    def total_mass(self) -> float:
        return float(np.sum(self.density) * self.bin_width)

    def sup_density(self) -> float:
        return float(np.max(self.density))


def occupation_density(series: ObservableSeries, observable: str,
                       bin_width: float) -> OccupationHistogram:
    """Time-average histogram of one recorded observable.

    Operationalizes the occupation identity: the fraction of time spent in
    each level bin, divided by the bin width.
    """
    if bin_width <= 0.0:
        raise EstimatorError("bin_width must be positive")
    values = series.column(observable)
    return occupation_density_of_samples(values, bin_width)


def occupation_density_of_samples(values: np.ndarray,
                                  bin_width: float) -> OccupationHistogram:
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise EstimatorError("empty sample set")
    lo = float(np.min(values))
    hi = float(np.max(values))
    n_bins = max(1, int(np.ceil((hi - lo) / bin_width)))
    edges = lo + bin_width * np.arange(n_bins + 1)
    counts, _ = np.histogram(values, bins=edges)
    density = counts / (values.size * bin_width)
    return OccupationHistogram(edges=edges, density=density)


def small_set_exponent(values: np.ndarray, n_scales: int = 8,
                       min_count: int = 30):
    """Fit gamma in P(|X - a| < h) ~ h^gamma around the sample median.

    An absolutely continuous law with bounded density has gamma ~ 1; the
    proved lower bound for the energy law is 1/2.
    """
    values = np.asarray(values, dtype=float)
    center = float(np.median(values))
    spread = float(np.std(values))
    if spread == 0.0:
        raise EstimatorError("degenerate samples")
    hs = spread * np.logspace(-2.0, 0.0, n_scales)
    probs = np.array([np.mean(np.abs(values - center) < h) for h in hs])
    keep = probs * values.size >= min_count
    if np.sum(keep) < 3:
        raise EstimatorError("too few populated scales for the exponent fit")
    slope, _ = np.polyfit(np.log(hs[keep]), np.log(probs[keep]), 1)
    return float(slope)


# ---------------------------------------------------------------------------
# diffusion matrix of (|<u>|^2, ||d_x u||^2) and its determinant bound
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DiffusionMatrix2:
    """2x2 noise covariance of the observable pair, nu and lambda included."""

    entries: np.ndarray
    nu: float

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=float)
        if m.shape != (2, 2):
            raise EstimatorError("entries must be a 2x2 matrix")
        if abs(m[0, 1] - m[1, 0]) > 1e-12 * (1.0 + np.max(np.abs(m))):
            raise EstimatorError("matrix must be symmetric")
        object.__setattr__(self, "entries", m)

    def det(self) -> float:
        m = self.entries
        return float(m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0])

    def is_psd(self, tol: float = 1e-12) -> bool:
        m = self.entries
        scale = max(1.0, float(np.max(np.abs(m))))
        return (m[0, 0] >= -tol * scale and m[1, 1] >= -tol * scale
                and self.det() >= -tol * scale * scale)


def _theta_vectors(u: SphereField, spectrum: NoiseSpectrum, nu: float):
    """Per-mode R^3 noise loadings (theta1_j, theta2_j) of the pair.

    theta1_j = sqrt(nu) lambda_j (<e_j u> x <u>) drives |<u>|^2;
    theta2_j = sqrt(nu) lambda_j int d_x e_j (u x d_x u) dx drives the energy.
    """
    dx = u.grid_spacing
    basis, dbasis = spectrum.tables(u.n_grid)
    keep = spectrum.modes != 0
    lam = spectrum.lambdas[keep]
    avg = fields.mean_over_grid(u.values)
    mode_avgs = basis[keep] @ u.values / u.n_grid          # <e_j u>, (m, 3)
    theta1 = np.sqrt(nu) * lam[:, None] * np.cross(mode_avgs, avg)
    torsion = np.cross(u.values, fields.central_diff(u.values, dx))
    theta2 = np.sqrt(nu) * lam[:, None] * (dbasis[keep] @ torsion) * dx
    return theta1, theta2


def diffusion_matrix(u: SphereField, spectrum: NoiseSpectrum,
                     nu: float) -> DiffusionMatrix2:
    theta1, theta2 = _theta_vectors(u, spectrum, nu)
    s11 = float(np.sum(theta1 * theta1))
    s22 = float(np.sum(theta2 * theta2))
    s12 = float(np.sum(theta1 * theta2))
    return DiffusionMatrix2(np.array([[s11, s12], [s12, s22]]), nu=nu)


def det_lower_bound(u: SphereField, spectrum: NoiseSpectrum, nu: float) -> float:
    """sum_j |theta1_j x theta2_j|^2 <= det(sigma), the same-mode part of
    the Lagrange identity for the determinant."""
    theta1, theta2 = _theta_vectors(u, spectrum, nu)
    crosses = np.cross(theta1, theta2)
    return float(np.sum(crosses * crosses))


# ---------------------------------------------------------------------------
# stationary balance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BalanceResult:
    """Time-averaged dissipation against the injection rate."""

    residual: float
    injection: float
    mean_dissipation: float
    short_segment: bool

    def __float__(self) -> float:
        return self.residual


def balance_residual(series: ObservableSeries, spectrum: NoiseSpectrum,
                     nu: float) -> BalanceResult:
    """(mean of ||u x d2u||^2) / injection - 1; near zero in stationarity.

    A segment shorter than 10 dissipation times 1/(nu * injection) is
    flagged as too short to trust.
    """
    rate = injection_rate(spectrum)
    mean_diss = float(np.mean(series.dissipation))
    if rate == 0.0:
        return BalanceResult(residual=-1.0, injection=0.0,
                             mean_dissipation=mean_diss, short_segment=False)
    duration = float(series.t[-1] - series.t[0]) if len(series) > 1 else 0.0
    short = nu > 0.0 and duration < 10.0 / (nu * rate)
    return BalanceResult(residual=mean_diss / rate - 1.0, injection=rate,
                         mean_dissipation=mean_diss, short_segment=short)


def balance_residual_of_samples(dissipation_samples: np.ndarray,
                                spectrum: NoiseSpectrum) -> float:
    rate = injection_rate(spectrum)
    if rate == 0.0:
        return -1.0
    return float(np.mean(dissipation_samples)) / rate - 1.0


# ---------------------------------------------------------------------------
# autocorrelation (used by the ensemble sampler)
# ---------------------------------------------------------------------------

def integrated_autocorrelation(series: np.ndarray, cap: int = 100) -> float:
    """Integrated autocorrelation time in sample units, window-capped.

    Uses the standard FFT estimator with a cut at the first non-positive
    autocorrelation; the result is clipped to [1, cap].
    """
    x = np.asarray(series, dtype=float)
    x = x - np.mean(x)
    n = len(x)
    if n < 4 or np.allclose(x, 0.0):
        return 1.0
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(x, m)
    acf = np.fft.irfft(f * np.conj(f), m)[:n].real
    acf /= acf[0]
    tau = 1.0
    for k in range(1, min(n, cap + 1)):
        if acf[k] <= 0.0:
            break
        tau += 2.0 * acf[k]
    return float(min(max(tau, 1.0), cap))
