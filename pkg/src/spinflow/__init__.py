"""Simulator and statistical test bench for the damped-driven sphere-valued
flow u_t = u x d2u - nu u x (u x d2u) + sqrt(nu) u x odW on [0, 2*pi]."""

__version__ = "0.1.0"

from .bcf import BcfReport, CurveField, bcf_checks, bcf_transform
from .ensemble import (StationaryEnsemble, SweepResult, estimate_stationary,
                       inviscid_sweep, load_ensemble, save_ensemble)
from .fields import FieldError, ObservableVector, SphereField, load_field, save_field
from .integrator import (ConfigError, NumericalBlowupError, ObservableSeries,
                         SimConfig, make_config, random_unit_field,
                         run_trajectory, stable_dt)
from .noise import NoiseIncrement, NoiseSpectrum, NoiseStream, injection_rate
from .stats import (DiffusionMatrix2, EmpiricalLaw, OccupationHistogram,
                    balance_residual, det_lower_bound, diffusion_matrix,
                    gaussian_tail_fit, occupation_density, small_ball_ratio,
                    tail_survival)

__all__ = [
    "BcfReport", "CurveField", "bcf_checks", "bcf_transform",
    "StationaryEnsemble", "SweepResult", "estimate_stationary",
    "inviscid_sweep", "load_ensemble", "save_ensemble",
    "FieldError", "ObservableVector", "SphereField", "load_field", "save_field",
    "ConfigError", "NumericalBlowupError", "ObservableSeries", "SimConfig",
    "make_config", "random_unit_field", "run_trajectory", "stable_dt",
    "NoiseIncrement", "NoiseSpectrum", "NoiseStream", "injection_rate",
    "DiffusionMatrix2", "EmpiricalLaw", "OccupationHistogram",
    "balance_residual", "det_lower_bound", "diffusion_matrix",
    "gaussian_tail_fit", "occupation_density", "small_ball_ratio",
    "tail_survival",
]
