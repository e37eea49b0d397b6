"""Relativistic classical scattering in long- and short-range electromagnetic fields.

Forward solvers for the scattering map and its modified variant, their
high-energy limits, and reconstruction of the short-range force from
high-energy scattering data via the x-ray transform.
"""

from .errors import (BelowRho0, BelowThreshold, ConditionViolated, ConfigError,
                     ExtrapolationDiverged, InsufficientSampling, NegativeInput, NoConvergence,
                     NonPerpendicular, NoRoot, QuadratureError, RelscatError, SlowDecay,
                     SpeedExceeded, StepFailure)
from .fields import Family, FieldModel
from .free import FUTURE, PAST, Trajectory, solve_free
from .grid import TimeGrid
from .inverse import (ReconstructionGrid, Sinogram, SweepConfig, born_terms,
                      extract_line_integrals, forward_sinogram, reconstruct_Fs,
                      synthetic_sweep, verify_high_energy, xray_forward, xray_invert)
from .kinematics import KinState, energy, g, g_inv, lorentz_factor, mu
from .modified import ModifiedDatum, compute_W_tilde, scatter_mod, solve_deflection_mod
from .scattering import (DeflectionSolution, ScatteringDatum, compute_W, ode_oracle, scatter,
                         solve_deflection)
from .bounds import rho0, rho0_tilde

__version__ = "0.1.0"

__all__ = [
    "BelowRho0",
    "BelowThreshold",
    "ConditionViolated",
    "ConfigError",
    "ExtrapolationDiverged",
    "InsufficientSampling",
    "NegativeInput",
    "NoConvergence",
    "NonPerpendicular",
    "NoRoot",
    "QuadratureError",
    "RelscatError",
    "SlowDecay",
    "SpeedExceeded",
    "StepFailure",
    "Family",
    "FieldModel",
    "FUTURE",
    "PAST",
    "Trajectory",
    "solve_free",
    "TimeGrid",
    "ReconstructionGrid",
    "Sinogram",
    "SweepConfig",
    "born_terms",
    "extract_line_integrals",
    "forward_sinogram",
    "reconstruct_Fs",
    "synthetic_sweep",
    "verify_high_energy",
    "xray_forward",
    "xray_invert",
    "KinState",
    "energy",
    "g",
    "g_inv",
    "lorentz_factor",
    "mu",
    "ModifiedDatum",
    "compute_W_tilde",
    "scatter_mod",
    "solve_deflection_mod",
    "DeflectionSolution",
    "ScatteringDatum",
    "compute_W",
    "ode_oracle",
    "scatter",
    "solve_deflection",
    "rho0",
    "rho0_tilde",
]
