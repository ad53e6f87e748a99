"""Lift of a sphere field to a unit-speed curve and the norm dictionary.

The curve is v(x) = int_0^x u, computed by the cumulative trapezoid.  With
the left-Riemann space average this makes the endpoint identity
v(2*pi) = 2*pi * <u> exact rather than O(N^-2): the periodic trapezoid sum
over a full period equals the left Riemann sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields
from .fields import SphereField, TWO_PI


class CurveError(ValueError):
    """Invalid curve data."""


@dataclass(frozen=True)
class CurveField:
    """Positions v(x_k), k = 0..N, with v(0) = 0."""

    points: np.ndarray
    grid_spacing: float

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim != 2 or p.shape[1] != 3 or p.shape[0] < 9:
            raise CurveError(f"expected an (N+1, 3) array, got shape {p.shape}")
        if np.max(np.abs(p[0])) != 0.0:
            raise CurveError("curve must start at the origin")
        object.__setattr__(self, "points", p)

    @property
    def n_segments(self) -> int:
        return self.points.shape[0] - 1

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.points.shape[0]) * self.grid_spacing

    def endpoint(self) -> np.ndarray:
        return self.points[-1]

    def tangent(self) -> np.ndarray:
        """Forward-difference tangent on the N segments (periodic in k)."""
        return np.diff(self.points, axis=0) / self.grid_spacing


def bcf_transform(u: SphereField) -> CurveField:
    """Cumulative trapezoidal integral of u from 0; v(0) = 0."""
    dx = u.grid_spacing
    closed = np.vstack([u.values, u.values[:1]])       # append u(2*pi) = u(0)
    increments = 0.5 * dx * (closed[:-1] + closed[1:])
    points = np.vstack([np.zeros(3), np.cumsum(increments, axis=0)])
    return CurveField(points=points, grid_spacing=dx)


@dataclass(frozen=True)
class BcfReport:
    """Residuals of the curve/field dictionary for one snapshot."""

    tangent_norm_sup_dev: float      # sup_k | |d_x v| - 1 |
    d2_energy_residual: float        # | ||d2 v||^2 - ||d_x u||^2 |
    d3_energy_residual: float        # | ||d3 v||^2 - ||d2 u||^2 |
    endpoint_residual: float         # | v(2*pi) - 2*pi <u> |


def bcf_checks(u: SphereField, v: CurveField) -> BcfReport:
    if v.n_segments != u.n_grid:
        raise CurveError("curve does not match the field grid")
    dx = u.grid_spacing
    tangent = v.tangent()                                   # (N, 3), periodic
    sup_dev = float(np.max(np.abs(np.linalg.norm(tangent, axis=1) - 1.0)))
    d2v = (tangent - np.roll(tangent, 1, axis=0)) / dx
    d2_sq = float(fields.l2_norm_sq(d2v, dx))
    d3v = fields.laplacian(tangent, dx)
    d3_sq = float(fields.l2_norm_sq(d3v, dx))
    endpoint = v.endpoint() - TWO_PI * fields.mean_over_grid(u.values)
    lap = fields.laplacian(u.values, dx)
    h2_sq = float(fields.l2_norm_sq(lap, dx))
    return BcfReport(
        tangent_norm_sup_dev=sup_dev,
        d2_energy_residual=abs(d2_sq - fields.energy_density_pairing(u.values, dx)),
        d3_energy_residual=abs(d3_sq - h2_sq),
        endpoint_residual=float(np.linalg.norm(endpoint)),
    )


def save_curve(path, v: CurveField) -> None:
    """CSV rows "x,vx,vy,vz", 17 significant digits."""
    with open(path, "w", newline="\n") as fh:
        for xk, (a, b, c) in zip(v.x, v.points):
            fh.write(f"{xk:.17g},{a:.17g},{b:.17g},{c:.17g}\n")


def load_curve(path) -> CurveField:
    with open(path) as fh:
        data = np.array([[float(c) for c in line.strip().split(",")]
                         for line in fh if line.strip()])
    if data.ndim != 2 or data.shape[1] != 4:
        raise CurveError("malformed curve file")
    dx = float(data[1, 0] - data[0, 0])
    return CurveField(points=data[:, 1:4], grid_spacing=dx)
