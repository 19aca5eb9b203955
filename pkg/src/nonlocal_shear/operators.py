"""
The nonlocal operator ``K``, powers of ``R`` and the local-form equivalents.

``Kw = (beta * S_x)_x + (beta * S_y)_y`` where ``(S_x, S_y)`` is the stress of
the strain energy at ``grad w``. The evaluation order is fixed:

    spectral gradient -> pointwise stress -> 2/3 dealias -> transform
    -> multiply by beta_hat * i xi -> sum -> inverse transform

``R`` is the Fourier multiplier ``beta_hat^(-1/2)``. It is unbounded for
decaying symbols, so positive powers go through a floor policy: modes with
``beta_hat < epsilon_floor`` are either skipped (multiplier 0) or capped
(``beta_hat`` replaced by ``epsilon_floor``), and the share of the input's
energy sitting in those modes is reported.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from nonlocal_shear.errors import NonFiniteError, StrictModeError
from nonlocal_shear.grid import Grid2D, SpectralField, fft2, ifft2
from nonlocal_shear.kernels import KernelSymbol
from nonlocal_shear.nonlinearity import AnisotropicEnergy, IsotropicEnergy

FLOOR_MODES = ("skip", "cap")
# Floored modes holding more than this share of a field's energy trigger a warning
# (an error in strict mode).
SKIPPED_ENERGY_LIMIT = 1e-8


@dataclass
class FloorTelemetry:
    """Running record of floor-policy activity."""

    n_floored_modes: int = 0
    max_energy_fraction: float = 0.0
    applications: int = 0

    def update(self, n_modes: int, fraction: float) -> None:
        self.applications += 1
        self.n_floored_modes = max(self.n_floored_modes, n_modes)
        self.max_energy_fraction = max(self.max_energy_fraction, fraction)


@dataclass(frozen=True, eq=False)
class OperatorContext:
    """Immutable pairing of grid, kernel and strain energy, plus numerical policy."""

    grid: Grid2D
    kernel: KernelSymbol
    energy: IsotropicEnergy | AnisotropicEnergy
    epsilon_floor: float = 1e-280
    floor_mode: str = "skip"
    dealias: bool = True
    imag_tol: float = 1e-10
    strict: bool = False
    beta: np.ndarray = field(init=False, repr=False)
    floored: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not (0.0 < self.epsilon_floor < 1.0):
            raise ValueError(f"epsilon_floor must lie in (0, 1), got {self.epsilon_floor!r}")
        if self.floor_mode not in FLOOR_MODES:
            raise ValueError(f"floor_mode must be one of {FLOOR_MODES}, got {self.floor_mode!r}")
        if not self.imag_tol > 0:
            raise ValueError("imag_tol must be positive")
        beta = self.kernel.on_grid(self.grid)
        if not np.all(np.isfinite(beta)):
            raise ValueError(f"kernel {self.kernel.name!r} has non-finite symbol values on the grid")
        if beta.min() < 0:
            raise ValueError(f"kernel {self.kernel.name!r} symbol is negative on the grid (min {beta.min():.3g})")
        beta.setflags(write=False)
        floored = beta < self.epsilon_floor
        floored.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "floored", floored)

    @property
    def is_anisotropic(self) -> bool:
        return isinstance(self.energy, AnisotropicEnergy)

    def with_energy(self, energy) -> "OperatorContext":
        return OperatorContext(
            self.grid,
            self.kernel,
            energy,
            epsilon_floor=self.epsilon_floor,
            floor_mode=self.floor_mode,
            dealias=self.dealias,
            imag_tol=self.imag_tol,
            strict=self.strict,
        )


def _checked(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        loc = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteError(f"{what} is non-finite at index {tuple(int(i) for i in loc)}")
    return a


def _to_real(ctx: OperatorContext, out_hat: np.ndarray, what: str) -> np.ndarray:
    out = ifft2(out_hat)
    scale = float(np.sum(np.abs(out_hat))) / ctx.grid.n_points
    residue = float(np.max(np.abs(out.imag)))
    if residue > ctx.imag_tol * scale:
        raise NonFiniteError(
            f"{what}: imaginary residue {residue:.3g} exceeds {ctx.imag_tol:g} of scale {scale:.3g}"
        )
    return _checked(out.real, what)


def stress_spectra(ctx: OperatorContext, w_hat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Fourier coefficients of the (dealiased) stress at ``grad w``."""
    _checked(w_hat, "w")
    dx, dy = ctx.grid.derivative_multipliers
    wx = ifft2(dx * w_hat).real
    wy = ifft2(dy * w_hat).real
    with np.errstate(over="ignore", invalid="ignore"):
        sx, sy = ctx.energy.stress(wx, wy)
    sx_hat = fft2(_checked(sx, "stress_x"))
    sy_hat = fft2(_checked(sy, "stress_y"))
    if ctx.dealias:
        mask = ctx.grid.dealias_mask
        sx_hat = np.where(mask, sx_hat, 0.0)
        sy_hat = np.where(mask, sy_hat, 0.0)
    return sx_hat, sy_hat


def divergence_hat(ctx: OperatorContext, w_hat: np.ndarray) -> np.ndarray:
    """Fourier coefficients of ``div stress(grad w)``, no kernel."""
    sx_hat, sy_hat = stress_spectra(ctx, w_hat)
    dx, dy = ctx.grid.derivative_multipliers
    with np.errstate(over="ignore", invalid="ignore"):
        return _checked(dx * sx_hat + dy * sy_hat, "divergence")


def apply_K_hat(ctx: OperatorContext, w_hat: np.ndarray) -> np.ndarray:
    """Array-level ``K``: Fourier coefficients in, real values out."""
    with np.errstate(over="ignore", invalid="ignore"):
        out_hat = ctx.beta * divergence_hat(ctx, w_hat)
    return _to_real(ctx, out_hat, "Kw")


def apply_K(ctx: OperatorContext, w: SpectralField) -> SpectralField:
    """``(beta * S_x)_x + (beta * S_y)_y`` for the stress ``S`` at ``grad w``."""
    _require_grid(ctx, w)
    return SpectralField.from_real(ctx.grid, apply_K_hat(ctx, w.fourier))


def local_divergence(ctx: OperatorContext, w: SpectralField) -> SpectralField:
    """``(S_x)_x + (S_y)_y`` with no kernel; equals ``R^2 w_tt`` along solutions."""
    _require_grid(ctx, w)
    return SpectralField.from_real(ctx.grid, _to_real(ctx, divergence_hat(ctx, w.fourier), "div S"))


def apply_local_equivalent(ctx: OperatorContext, w: SpectralField) -> SpectralField:
    """Acceleration from the equivalent local form of the equation.

    For ``bessel_k0`` this solves ``(1 - Lap) a = div S``; for ``bi_helmholtz``
    ``(1 - g1 Lap + g2 Lap^2) a = div S``. Other kernels have no local form.
    """
    _require_grid(ctx, w)
    name = ctx.kernel.name
    k2 = ctx.grid.xi_squared
    if name == "bessel_k0":
        operator_symbol = 1.0 + k2
    elif name == "bi_helmholtz":
        g1 = ctx.kernel.params["gamma1"]
        g2 = ctx.kernel.params["gamma2"]
        operator_symbol = 1.0 + g1 * k2 + g2 * k2 * k2
    else:
        raise ValueError(f"kernel {name!r} has no local differential form; use bessel_k0 or bi_helmholtz")
    div_hat = divergence_hat(ctx, w.fourier)
    return SpectralField.from_real(ctx.grid, _to_real(ctx, div_hat / operator_symbol, "local form"))


def r_power_multiplier(ctx: OperatorContext, p: float) -> tuple[np.ndarray, np.ndarray]:
    """``beta_hat^(-p/2)`` on the grid plus the mask of modes handled by the floor policy.

    Only amplifying powers (``p > 0``) are floored.
    """
    beta = ctx.beta
    if p <= 0:
        return np.power(beta, -0.5 * p), np.zeros(beta.shape, dtype=bool)
    floored = ctx.floored
    if ctx.floor_mode == "skip":
        safe = np.where(floored, 1.0, beta)
        mult = np.where(floored, 0.0, np.power(safe, -0.5 * p))
    else:
        mult = np.power(np.maximum(beta, ctx.epsilon_floor), -0.5 * p)
    return mult, floored


def floored_energy_fraction(ctx: OperatorContext, f_hat: np.ndarray) -> float:
    if not ctx.floored.any():
        return 0.0
    power = np.abs(f_hat) ** 2
    total = float(power.sum())
    if total == 0.0:
        return 0.0
    return float(power[ctx.floored].sum()) / total


def _police_floor(ctx: OperatorContext, f_hat: np.ndarray, telemetry: FloorTelemetry | None) -> float:
    fraction = floored_energy_fraction(ctx, f_hat)
    if telemetry is not None:
        telemetry.update(int(ctx.floored.sum()), fraction)
    if fraction > SKIPPED_ENERGY_LIMIT:
        msg = (
            f"floor policy {ctx.floor_mode!r} touched modes holding {fraction:.3g} of the field's energy "
            f"(limit {SKIPPED_ENERGY_LIMIT:g})"
        )
        if ctx.strict:
            raise StrictModeError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return fraction


def apply_R_power(
    ctx: OperatorContext, f: SpectralField, p: float, telemetry: FloorTelemetry | None = None
) -> SpectralField:
    """``R^p f``: multiply Fourier coefficients by ``beta_hat^(-p/2)``.

    ``p = -2`` is convolution with the kernel.
    """
    _require_grid(ctx, f)
    mult, _ = r_power_multiplier(ctx, p)
    if p > 0:
        _police_floor(ctx, f.fourier, telemetry)
    return SpectralField.from_fourier(ctx.grid, mult * f.fourier)


def r_inner(ctx: OperatorContext, f_hat: np.ndarray, g_hat: np.ndarray, telemetry: FloorTelemetry | None = None) -> float:
    """``<R f, R g>`` in L2 of the box, computed as a weighted Parseval sum."""
    mult, _ = r_power_multiplier(ctx, 2.0)
    _police_floor(ctx, f_hat, telemetry)
    if g_hat is not f_hat:
        _police_floor(ctx, g_hat, telemetry)
    return ctx.grid.norm_weight() * float(np.sum(mult * (f_hat.real * g_hat.real + f_hat.imag * g_hat.imag)))


def r_norm_squared(ctx: OperatorContext, f_hat: np.ndarray, telemetry: FloorTelemetry | None = None) -> float:
    """``||R f||^2``."""
    return r_inner(ctx, f_hat, f_hat, telemetry)


def omega_max(ctx: OperatorContext) -> float:
    """Largest linear frequency ``|xi| sqrt(beta_hat(xi))`` over the grid."""
    return float(np.sqrt(np.max(ctx.grid.xi_squared * ctx.beta)))


def _require_grid(ctx: OperatorContext, f: SpectralField) -> None:
    if f.grid != ctx.grid:
        raise ValueError("field grid does not match the operator context grid")
