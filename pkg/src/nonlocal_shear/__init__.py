"""Pseudospectral simulation and diagnostics for two-dimensional nonlocal
anti-plane shear waves.

The equation solved is

    w_tt = (beta * dF/dw_x)_x + (beta * dF/dw_y)_y

on a periodic box, where ``beta`` is a convolution kernel given by its Fourier
symbol and ``F`` is a strain-energy density of ``|grad w|^2`` (or of
``grad w`` in the anisotropic case).
"""

from nonlocal_shear.errors import (
    BlowupOrInstability,
    NonFiniteError,
    ScenarioError,
    StrictModeError,
)
from nonlocal_shear.grid import Grid2D, SpectralField
from nonlocal_shear.kernels import KernelSymbol
from nonlocal_shear.nonlinearity import AnisotropicEnergy, IsotropicEnergy
from nonlocal_shear.operators import OperatorContext
from nonlocal_shear.integrator import SimState, StepControl, RunOutcome, run
from nonlocal_shear.diagnostics import DiagnosticsRecord, LevineConfig

__version__ = "0.1.0"

__all__ = [
    "AnisotropicEnergy",
    "BlowupOrInstability",
    "DiagnosticsRecord",
    "Grid2D",
    "IsotropicEnergy",
    "KernelSymbol",
    "LevineConfig",
    "NonFiniteError",
    "OperatorContext",
    "RunOutcome",
    "ScenarioError",
    "SimState",
    "SpectralField",
    "StepControl",
    "StrictModeError",
    "run",
]
