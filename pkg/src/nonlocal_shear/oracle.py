"""
Slow reference computations for validating the spectral path on small grids.

None of these are used by production runs.

- :func:`direct_convolution` evaluates the periodic convolution sum directly
  (cost O(N^2) in the number of grid points).
- :func:`picard_solve` iterates the integral form of the equation,
  ``w(t) = phi + t psi + int_0^t (t - s) Kw(s) ds``, with trapezoidal quadrature.
- :func:`finite_difference_K` replaces the spectral gradient and divergence by
  second-order staggered differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from nonlocal_shear.grid import Grid2D, SpectralField, fft2, ifft2
from nonlocal_shear.integrator import SimState
from nonlocal_shear.kernels import KernelSymbol
from nonlocal_shear.operators import OperatorContext, apply_K_hat

MAX_DIRECT_POINTS = 64 * 64


@dataclass(frozen=True)
class DenseField:
    """Plain sample array on a grid."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values have shape {values.shape}, grid is {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("DenseField entries must be finite")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_spectral(cls, f: SpectralField) -> "DenseField":
        return cls(f.grid, f.real.copy())

    def to_spectral(self) -> SpectralField:
        return SpectralField.from_real(self.grid, self.values)


def kernel_samples(kernel: KernelSymbol, grid: Grid2D) -> DenseField:
    """Discrete kernel whose quadrature-weighted convolution has multiplier ``beta_hat``.

    Entry ``[m1, m2]`` is the kernel at displacement ``(m1 hx, m2 hy)`` (periodic).
    """
    values = ifft2(kernel.on_grid(grid)).real / grid.cell_area
    return DenseField(grid, values)


def direct_convolution(kernel: DenseField, f: DenseField) -> DenseField:
    """Periodic direct sum ``sum_m kernel[m] f[i - m] * lx ly / (nx ny)``."""
    if kernel.grid != f.grid:
        raise ValueError("kernel and field grids differ")
    grid = f.grid
    if grid.n_points > MAX_DIRECT_POINTS:
        raise ValueError(f"direct convolution is capped at {MAX_DIRECT_POINTS} points, grid has {grid.n_points}")
    out = np.zeros(grid.shape)
    k = kernel.values
    fv = f.values
    for m1 in range(grid.nx):
        shifted = np.roll(fv, m1, axis=0)
        for m2 in range(grid.ny):
            c = k[m1, m2]
            if c != 0.0:
                out += c * np.roll(shifted, m2, axis=1)
    return DenseField(grid, out * grid.cell_area)


@dataclass
class PicardResult:
    state: SimState
    residuals: list = field(default_factory=list)
    contracted: bool = True
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else 0.0


def _contracts(residuals, floor):
    """Last sweep contracted, or everything is already at the rounding floor."""
    if len(residuals) < 2:
        return True
    last, prev = residuals[-1], residuals[-2]
    return last <= floor or last < prev


def picard_solve(
    ctx: OperatorContext,
    phi: SpectralField,
    psi: SpectralField,
    t_end: float,
    n_iter: int = 8,
    quad_points: int = 65,
) -> PicardResult:
    """Fixed-point sweeps on the twice-integrated equation over ``[0, t_end]``.

    ``residuals[k]`` is the max-norm change of ``w`` over all time nodes in
    sweep ``k + 1``. The result reports ``contracted=False`` when the last
    sweep grew the residual above the rounding floor.
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if n_iter < 4:
        raise ValueError("picard_solve needs n_iter >= 4")
    if quad_points < 2:
        raise ValueError("quad_points must be >= 2")
    tau = np.linspace(0.0, t_end, quad_points)
    p = phi.real
    s = psi.real
    shape = (quad_points,) + p.shape
    w = p[None] + tau[:, None, None] * s[None]
    v = np.broadcast_to(s, shape).copy()
    residuals = []
    scale = max(float(np.max(np.abs(w))), 1e-300)
    floor = 64 * np.finfo(float).eps * scale
    for _ in range(n_iter):
        kw = np.stack([apply_K_hat(ctx, fft2(w[j])) for j in range(quad_points)])
        i0 = cumulative_trapezoid(kw, tau, axis=0, initial=0.0)
        i1 = cumulative_trapezoid(tau[:, None, None] * kw, tau, axis=0, initial=0.0)
        w_new = p[None] + tau[:, None, None] * s[None] + tau[:, None, None] * i0 - i1
        v = s[None] + i0
        residuals.append(float(np.max(np.abs(w_new - w))))
        w = w_new
    contracted = _contracts(residuals, floor)
    state = SimState(
        SpectralField.from_real(ctx.grid, w[-1]),
        SpectralField.from_real(ctx.grid, v[-1]),
        t=float(t_end),
    )
    message = "" if contracted else f"residual grew from {residuals[-2]:.3g} to {residuals[-1]:.3g}; t_end too large"
    return PicardResult(state=state, residuals=residuals, contracted=contracted, message=message)


def picard_contraction_threshold(
    ctx: OperatorContext,
    phi: SpectralField,
    psi: SpectralField,
    t_start: float = 0.25,
    t_max: float = 64.0,
    n_iter: int = 8,
    quad_points: int = 33,
) -> float:
    """Largest ``t_end`` in a doubling scan from ``t_start`` for which Picard sweeps still contract."""
    t = t_start
    best = 0.0
    while t <= t_max:
        res = picard_solve(ctx, phi, psi, t, n_iter=n_iter, quad_points=quad_points)
        if not res.contracted:
            break
        best = t
        t *= 2.0
    return best


def finite_difference_K(ctx: OperatorContext, w: SpectralField, h_order: int = 2) -> DenseField:
    """Reference ``Kw`` with second-order staggered differences and spectral convolution.

    Stresses live on cell faces: ``S_x`` at ``(i+1/2, j)`` from the forward
    x-difference and the face-averaged centered y-difference, and symmetrically
    for ``S_y``. The divergence is the backward difference of the face
    stresses, so ``F(u) = u/2`` reproduces the five-point Laplacian.
    """
    if h_order != 2:
        raise ValueError("only second-order differences are implemented")
    grid = ctx.grid
    hx, hy = grid.hx, grid.hy
    u = w.real

    def sx_(a):  # a[i+1] - a[i]
        return np.roll(a, -1, axis=0) - a

    def sy_(a):
        return np.roll(a, -1, axis=1) - a

    cy = (np.roll(u, -1, axis=1) - np.roll(u, 1, axis=1)) / (2 * hy)
    cx = (np.roll(u, -1, axis=0) - np.roll(u, 1, axis=0)) / (2 * hx)
    # x-faces
    px = sx_(u) / hx
    qx = 0.5 * (cy + np.roll(cy, -1, axis=0))
    Sx, _ = ctx.energy.stress(px, qx)
    # y-faces
    qy = sy_(u) / hy
    py = 0.5 * (cx + np.roll(cx, -1, axis=1))
    _, Sy = ctx.energy.stress(py, qy)
    div = (Sx - np.roll(Sx, 1, axis=0)) / hx + (Sy - np.roll(Sy, 1, axis=1)) / hy
    out = ifft2(ctx.beta * fft2(div)).real
    return DenseField(grid, out)
