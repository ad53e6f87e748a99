"""Truncated Q-Wiener noise on the trigonometric basis of L^2([0, 2*pi]).

The basis is e_j(x) = sin(jx)/sqrt(pi) for j > 0, 1/sqrt(2*pi) for j = 0 and
cos(jx)/sqrt(pi) for j < 0.  A noise increment carries one independent
R^3-valued Gaussian per retained mode; the synthesized field is
W(x_k) = sum_j lambda_j e_j(x_k) dW^j.

Random streams are counter-based (Philox) and keyed by (seed, trajectory id),
so ensembles reproduce bit-for-bit regardless of how trajectories are
scheduled across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import TWO_PI


class SpectrumError(ValueError):
    """Invalid noise-spectrum configuration."""


SQRT_PI = np.sqrt(np.pi)

#: noise draws are consumed in fixed-size blocks so that a trajectory's
#: stream does not depend on how the time loop is chunked
NOISE_BLOCK = 256


def basis_eval(j: int, x) -> np.ndarray:
    """Evaluate the orthonormal trigonometric basis function of index j."""
    x = np.asarray(x, dtype=float)
    if j > 0:
        out = np.sin(j * x) / SQRT_PI
    elif j == 0:
        out = np.full_like(x, 1.0 / np.sqrt(TWO_PI))
    else:
        out = np.cos(j * x) / SQRT_PI
    return out if out.ndim else float(out)


def dbasis_eval(j: int, x) -> np.ndarray:
    """Spatial derivative of basis_eval."""
    x = np.asarray(x, dtype=float)
    if j > 0:
        out = j * np.cos(j * x) / SQRT_PI
    elif j == 0:
        out = np.zeros_like(x)
    else:
        out = -j * np.sin(j * x) / SQRT_PI
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class NoiseSpectrum:
    """Truncated coefficient family {lambda_j, |j| <= J} with basis tables."""

    modes: np.ndarray        # sorted int array, -J..J
    lambdas: np.ndarray      # lambda_j >= 0, matching modes
    _tables: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=int)
        lams = np.asarray(self.lambdas, dtype=float)
        if modes.shape != lams.shape or modes.ndim != 1:
            raise SpectrumError("modes and lambdas must be 1-d arrays of equal length")
        order = np.argsort(modes)
        modes, lams = modes[order], lams[order]
        if len(np.unique(modes)) != len(modes):
            raise SpectrumError("duplicate mode indices")
        if np.any(lams < 0.0):
            raise SpectrumError("lambda_j must be nonnegative")
        lam = dict(zip(modes.tolist(), lams.tolist()))
        for j in modes:
            if abs(lam.get(int(j), 0.0) - lam.get(int(-j), 0.0)) > 1e-15:
                raise SpectrumError(f"spectrum must satisfy lambda_j = lambda_-j (j={j})")
        positive = sorted(j for j in lam if j > 0)
        seq = [lam[j] for j in positive]
        if any(a < b - 1e-15 for a, b in zip(seq, seq[1:])):
            raise SpectrumError("(lambda_j)_{j>=0} must be non-increasing")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "lambdas", lams)

    @classmethod
    def power(cls, truncation: int, exponent: float = 2.0,
              lambda0: float = 0.0) -> "NoiseSpectrum":
        """lambda_j = |j|^-exponent for 1 <= |j| <= J, lambda_0 as given."""
        if truncation < 1:
            raise SpectrumError("truncation must be >= 1")
        modes = np.arange(-truncation, truncation + 1)
        lams = np.where(modes == 0, lambda0,
                        1.0 / np.maximum(np.abs(modes), 1) ** exponent)
        return cls(modes, lams)

    @classmethod
    def from_pairs(cls, pairs) -> "NoiseSpectrum":
        """Build from (j, lambda_j) pairs given for j > 0; mirrored to -j.

        lambda_0 may be supplied as a (0, value) pair; unlisted modes up to
        the largest listed |j| get lambda = 0.
        """
        lam = {}
        for j, val in pairs:
            j = int(j)
            if j < 0:
                raise SpectrumError("custom pairs are given for j >= 0 only")
            lam[j] = float(val)
            if j > 0:
                lam[-j] = float(val)
        truncation = max((abs(j) for j in lam), default=0)
        if truncation < 1:
            raise SpectrumError("custom spectrum needs at least one mode j != 0")
        modes = np.arange(-truncation, truncation + 1)
        lams = np.array([lam.get(int(j), 0.0) for j in modes])
        return cls(modes, lams)

    @property
    def truncation(self) -> int:
        return int(np.max(np.abs(self.modes)))

    @property
    def n_modes(self) -> int:
        return len(self.modes)

    def tables(self, n_grid: int):
        """(basis, dbasis) value tables of shape (n_modes, n_grid), cached."""
        if n_grid not in self._tables:
            if self.truncation >= n_grid // 2:
                raise SpectrumError(
                    f"truncation {self.truncation} at or above Nyquist for N={n_grid}")
            x = np.arange(n_grid) * (TWO_PI / n_grid)
            basis = np.stack([basis_eval(int(j), x) for j in self.modes])
            dbasis = np.stack([dbasis_eval(int(j), x) for j in self.modes])
            self._tables[n_grid] = (basis, dbasis)
        return self._tables[n_grid]

    def weighted_basis(self, n_grid: int) -> np.ndarray:
        """lambda_j * e_j(x_k) table used by the synthesis step."""
        return self.lambdas[:, None] * self.tables(n_grid)[0]

    def injection_rate(self) -> float:
        """Energy injected per unit time: sum_j lambda_j^2 ||d_x e_j||^2.

        Since ||d_x e_j||^2_{L^2} = j^2 this is sum_j j^2 lambda_j^2 over
        the full (two-sided) truncated index set.  It equals the stationary
        mean of ||u x d2 u||^2 along the damped-driven dynamics.
        """
        return float(np.sum(self.modes.astype(float) ** 2 * self.lambdas ** 2))


def injection_rate(spectrum: NoiseSpectrum) -> float:
    return spectrum.injection_rate()


def default_truncation(n_grid: int) -> int:
    return min(32, n_grid // 4)


# ---------------------------------------------------------------------------
# increments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NoiseIncrement:
    """Per-mode R^3 Brownian increments over one step of length dt."""

    dW: np.ndarray           # (n_modes, 3), units sqrt(time)
    dt: float


def trajectory_rng(seed: int, traj_id: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (seed, trajectory id)."""
    key = np.array([np.uint64(seed & 0xFFFFFFFFFFFFFFFF),
                    np.uint64(traj_id & 0xFFFFFFFFFFFFFFFF)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_increment(spectrum: NoiseSpectrum, dt: float,
                     rng: np.random.Generator) -> NoiseIncrement:
    """Independent N(0, dt) scalars for every (mode, coordinate)."""
    if dt < 0.0:
        raise ValueError("dt must be nonnegative")
    draws = rng.standard_normal((spectrum.n_modes, 3))
    return NoiseIncrement(dW=np.sqrt(dt) * draws, dt=dt)


def noise_field(spectrum: NoiseSpectrum, inc: NoiseIncrement,
                n_grid: int) -> np.ndarray:
    """Synthesize W(x_k) = sum_j lambda_j e_j(x_k) dW^j as an (N, 3) field."""
    if inc.dW.shape != (spectrum.n_modes, 3):
        raise ValueError("increment does not match the spectrum")
    return np.einsum("mc,mn->nc", inc.dW, spectrum.weighted_basis(n_grid))


class NoiseStream:
    """Blocked sampler for one trajectory's increments.

    Draws standard normals in fixed NOISE_BLOCK chunks so the stream is a
    pure function of (seed, trajectory id, draw index).
    """

    def __init__(self, spectrum: NoiseSpectrum, seed: int, traj_id: int = 0):
        self.spectrum = spectrum
        self._rng = trajectory_rng(seed, traj_id)
        self._buffer = None
        self._cursor = 0

    def next_normals(self) -> np.ndarray:
        """(n_modes, 3) standard normals for one step."""
        if self._buffer is None or self._cursor >= NOISE_BLOCK:
            self._buffer = self._rng.standard_normal(
                (NOISE_BLOCK, self.spectrum.n_modes, 3))
            self._cursor = 0
        out = self._buffer[self._cursor]
        self._cursor += 1
        return out

    def next_increment(self, dt: float) -> NoiseIncrement:
        return NoiseIncrement(dW=np.sqrt(dt) * self.next_normals(), dt=dt)
