"""Sphere-valued fields on a uniform periodic grid over [0, 2*pi].

A field is stored as an (N, 3) array of unit vectors sampled at the
left-endpoint grid x_k = k * dx, dx = 2*pi / N.  All spatial operators are
periodic finite differences; the quadrature is the left Riemann sum, which
is spectrally exact for trigonometric polynomials below the Nyquist mode.

The first- and second-derivative stencils are matched so that the discrete
integration by parts  <d2 u, u> = -||d+ u||^2  holds to rounding; the
Dirichlet energy is defined through that pairing so the discrete balance
identities close exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * np.pi

#: tolerance for the pointwise unit-norm constraint
UNIT_NORM_TOL = 1e-12

SNAPSHOT_FORMAT = "spinflow-field v1"


class FieldError(ValueError):
    """Invalid sphere-field data."""


def grid(n_grid: int) -> np.ndarray:
    """Grid points x_k = k * 2*pi/N, k = 0..N-1."""
    return np.arange(n_grid) * (TWO_PI / n_grid)


# ---------------------------------------------------------------------------
# raw-array operators (support leading batch dimensions; axis -2 is space)
# ---------------------------------------------------------------------------

def laplacian(values: np.ndarray, dx: float) -> np.ndarray:
    """Periodic 3-point second difference."""
    return (np.roll(values, -1, axis=-2) - 2.0 * values
            + np.roll(values, 1, axis=-2)) / (dx * dx)


def central_diff(values: np.ndarray, dx: float) -> np.ndarray:
    """Periodic central first difference."""
    return (np.roll(values, -1, axis=-2) - np.roll(values, 1, axis=-2)) / (2.0 * dx)


def forward_diff(values: np.ndarray, dx: float) -> np.ndarray:
    """Periodic forward first difference (the stencil paired with laplacian)."""
    return (np.roll(values, -1, axis=-2) - values) / dx


def mean_over_grid(values: np.ndarray) -> np.ndarray:
    """(1/|D|) integral over the domain, i.e. the grid mean."""
    return values.mean(axis=-2)


def l2_norm_sq(values: np.ndarray, dx: float) -> np.ndarray:
    """Squared L2 norm by the left Riemann sum."""
    return np.sum(values * values, axis=(-2, -1)) * dx


def energy_density_pairing(values: np.ndarray, dx: float) -> np.ndarray:
    """||d_x u||^2 computed as -<u, d2 u> dx; equals the forward-difference
    norm squared exactly."""
    return -np.sum(values * laplacian(values, dx), axis=(-2, -1)) * dx


# ---------------------------------------------------------------------------
# SphereField and its observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereField:
    """A sampled map [0, 2*pi] -> S^2 on a uniform grid of N points."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3:
            raise FieldError(f"expected an (N, 3) array, got shape {v.shape}")
        n = v.shape[0]
        if n < 8 or n % 2 != 0:
            raise FieldError(f"grid size must be even and >= 8, got {n}")
        norms = np.linalg.norm(v, axis=1)
        drift = np.max(np.abs(norms - 1.0))
        if not np.isfinite(drift) or drift > UNIT_NORM_TOL:
            raise FieldError(f"pointwise |u| deviates from 1 by {drift:.3e}")
        object.__setattr__(self, "values", v)

    @property
    def n_grid(self) -> int:
        return self.values.shape[0]

    @property
    def grid_spacing(self) -> float:
        return TWO_PI / self.n_grid

    @property
    def x(self) -> np.ndarray:
        return grid(self.n_grid)


@dataclass(frozen=True)
class ObservableVector:
    """The pair (|<u>|^2, ||d_x u||^2) pushed around by the 2D density tests."""

    avg_sq: float
    energy: float

    def __post_init__(self):
        if not (-1e-12 <= self.avg_sq <= 1.0 + 1e-12):
            raise FieldError(f"avg_sq out of [0, 1]: {self.avg_sq}")
        if self.energy < -1e-12:
            raise FieldError(f"negative energy: {self.energy}")


def space_average(u: SphereField) -> np.ndarray:
    """<u> = (1/2*pi) * integral of u."""
    return mean_over_grid(u.values)


def dirichlet_energy(u: SphereField) -> float:
    """||d_x u||^2_{L^2} via the matched-stencil pairing."""
    return float(energy_density_pairing(u.values, u.grid_spacing))


def second_derivative(u: SphereField) -> np.ndarray:
    """Periodic 3-point second difference of the field values."""
    return laplacian(u.values, u.grid_spacing)


def cross_field(u: SphereField, w: np.ndarray) -> np.ndarray:
    """Pointwise u[k] x w[k]."""
    w = np.asarray(w, dtype=float)
    if w.shape != u.values.shape:
        raise FieldError(f"shape mismatch: field {u.values.shape}, other {w.shape}")
    return np.cross(u.values, w)


def gamma_matrix(v) -> np.ndarray:
    """Skew matrix G with G @ w = v x w for all w."""
    v1, v2, v3 = np.asarray(v, dtype=float)
    return np.array([[0.0, -v3, v2],
                     [v3, 0.0, -v1],
                     [-v2, v1, 0.0]])


def centered_l2_sq(u: SphereField) -> float:
    """||u - <u>||^2_{L^2}; equals 2*pi*(1 - |<u>|^2) for unit fields."""
    centered = u.values - mean_over_grid(u.values)
    return float(l2_norm_sq(centered, u.grid_spacing))


def observable_vector(u: SphereField) -> ObservableVector:
    avg = space_average(u)
    return ObservableVector(avg_sq=float(avg @ avg), energy=dirichlet_energy(u))


def dissipation_norm_sq(u: SphereField) -> float:
    """||u x d2 u||^2_{L^2}, the instantaneous damping/injection observable."""
    w = np.cross(u.values, second_derivative(u))
    return float(l2_norm_sq(w, u.grid_spacing))


# ---------------------------------------------------------------------------
# snapshot file format: header "spinflow-field v1, N=<int>", rows x,ux,uy,uz
# ---------------------------------------------------------------------------

def save_field(path, u: SphereField) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{SNAPSHOT_FORMAT}, N={u.n_grid}\n")
        for xk, (a, b, c) in zip(u.x, u.values):
            fh.write(f"{xk:.17g},{a:.17g},{b:.17g},{c:.17g}\n")


def load_field(path) -> SphereField:
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith(SNAPSHOT_FORMAT):
            raise FieldError(f"unrecognized snapshot header: {header!r}")
        try:
            n = int(header.split("N=")[1])
        except (IndexError, ValueError) as exc:
            raise FieldError(f"malformed snapshot header: {header!r}") from exc
        rows = [line.strip().split(",") for line in fh if line.strip()]
    if len(rows) != n:
        raise FieldError(f"snapshot truncated: expected {n} rows, got {len(rows)}")
    data = np.array([[float(c) for c in row] for row in rows])
    return SphereField(data[:, 1:4])
