"""
Fixed validation suites behind ``nonlocal-shear validate``.

Each suite returns rows with at least ``check``, ``value``, ``tolerance`` and
``passed``. Suites are deterministic (seeded RNG, fixed grids).
"""

from __future__ import annotations

import math

import numpy as np

from nonlocal_shear import kernels, nonlinearity
from nonlocal_shear.grid import Grid2D, SpectralField, fft2, ifft2
from nonlocal_shear.integrator import SimState, StepControl, run
from nonlocal_shear.operators import OperatorContext, apply_K
from nonlocal_shear.oracle import DenseField, direct_convolution, finite_difference_K, kernel_samples, picard_solve

SEED = 20240611
SUITES = ("kernels", "oracles", "convergence")


def _row(check, value, tolerance, passed, **extra):
    return {"check": check, "value": float(value), "tolerance": float(tolerance), "passed": bool(passed), **extra}


def builtin_kernels() -> list[kernels.KernelSymbol]:
    return [kernels.gaussian(), kernels.bessel_k0(), kernels.bi_helmholtz(2.0, 1.0), kernels.dirac()]


def kernel_suite(grid: Grid2D | None = None) -> list[dict]:
    """Decay reports for the built-ins; ``dirac`` is expected to fail the decay bound."""
    grid = grid or Grid2D(64, 64, 40.0, 40.0)
    rows = []
    for k in builtin_kernels():
        rep = kernels.validate_decay(k, grid)
        rows.append(
            _row(
                f"decay:{k.name}",
                rep.empirical_C,
                rep.C,
                rep.passed == k.satisfies_decay,
                r=rep.r,
                min_symbol=rep.min_symbol,
                decay_bound_holds=rep.passed,
                expected=k.satisfies_decay,
            )
        )
    return rows


def g1_context(grid: Grid2D | None = None) -> OperatorContext:
    grid = grid or Grid2D(64, 64, 40.0, 40.0)
    return OperatorContext(grid, kernels.bessel_k0(), nonlinearity.linear_plus(nonlinearity.powerlaw(1.0, 2.0)))


def g1_initial(grid: Grid2D, amplitude: float = 0.1, sigma: float = 2.0) -> SimState:
    phi = SpectralField.from_function(grid, lambda x, y: amplitude * np.exp(-(x * x + y * y) / (2.0 * sigma**2)))
    return SimState(phi, SpectralField.zeros(grid))


def convolution_errors(n_instances: int = 20, n: int = 16, seed: int = SEED) -> list[float]:
    """Relative max error, spectral vs direct convolution, over random kernels and fields."""
    rng = np.random.default_rng(seed)
    grid = Grid2D(n, n, 2.0 * math.pi, 2.0 * math.pi)
    choices = [kernels.bessel_k0(), kernels.gaussian(), kernels.bi_helmholtz(2.0, 1.0)]
    errors = []
    for i in range(n_instances):
        k = choices[i % len(choices)]
        f = rng.standard_normal(grid.shape)
        spectral = ifft2(k.on_grid(grid) * fft2(f)).real
        direct = direct_convolution(kernel_samples(k, grid), DenseField(grid, f)).values
        errors.append(float(np.max(np.abs(spectral - direct)) / np.max(np.abs(spectral))))
    return errors


def picard_vs_rk4(t_end: float = 0.25, n_iter: int = 8, quad_points: int = 65, dt: float = 0.0125):
    ctx = g1_context()
    s0 = g1_initial(ctx.grid)
    pic = picard_solve(ctx, s0.w, s0.v, t_end, n_iter=n_iter, quad_points=quad_points)
    out = run(ctx, s0, StepControl(dt=dt, t_end=t_end))
    diff = float(np.max(np.abs(pic.state.w.real - out.final_state.w.real)))
    return diff, pic


def oracle_suite() -> list[dict]:
    rows = []
    errs = convolution_errors()
    rows.append(_row("convolution:direct_vs_spectral", max(errs), 1e-10, max(errs) <= 1e-10, instances=len(errs)))

    grid = Grid2D(16, 16, 2.0 * math.pi, 2.0 * math.pi)
    f = np.random.default_rng(SEED + 1).standard_normal(grid.shape)
    ident = direct_convolution(kernel_samples(kernels.dirac(), grid), DenseField(grid, f)).values
    err = float(np.max(np.abs(ident - f)))
    rows.append(_row("convolution:dirac_identity", err, 1e-10, err <= 1e-10))

    diff, pic = picard_vs_rk4()
    rows.append(_row("picard:vs_rk4", diff, 1e-6, diff <= 1e-6))
    rows.append(
        _row(
            "picard:contraction",
            pic.final_residual,
            pic.residuals[-2] if len(pic.residuals) > 1 else 0.0,
            pic.contracted,
            residuals=" ".join(f"{r:.3e}" for r in pic.residuals),
        )
    )
    return rows


def _final_w(ctx, s0, dt, t_end, scheme):
    return run(ctx, s0, StepControl(dt=dt, t_end=t_end, scheme=scheme)).final_state.w.real


def observed_order(ctx, s0, scheme: str, dt: float, t_end: float) -> float:
    """Self-convergence order from three step sizes ``dt, dt/2, dt/4``."""
    a = _final_w(ctx, s0, dt, t_end, scheme)
    b = _final_w(ctx, s0, dt / 2, t_end, scheme)
    c = _final_w(ctx, s0, dt / 4, t_end, scheme)
    return math.log2(np.max(np.abs(a - b)) / np.max(np.abs(b - c)))


def fd_order(ns=(32, 64, 128), length: float = 40.0) -> float:
    """Observed spatial order of ``finite_difference_K`` against the spectral ``K``."""
    errs = []
    for n in ns:
        ctx = g1_context(Grid2D(n, n, length, length))
        w = g1_initial(ctx.grid, amplitude=0.5, sigma=3.0).w
        errs.append(float(np.max(np.abs(finite_difference_K(ctx, w).values - apply_K(ctx, w).real))))
    return math.log2(errs[-2] / errs[-1])


def convergence_suite() -> list[dict]:
    ctx = g1_context()
    s0 = g1_initial(ctx.grid, amplitude=0.5)
    rows = []
    p = observed_order(ctx, s0, "rk4", 0.2, 2.0)
    rows.append(_row("order:rk4", p, 3.8, p >= 3.8))
    p = observed_order(ctx, s0, "leapfrog", 0.1, 2.0)
    rows.append(_row("order:leapfrog", p, 1.9, p >= 1.9))
    p = fd_order()
    rows.append(_row("order:finite_difference_K", p, 1.9, p >= 1.9))
    return rows


def run_suite(name: str) -> list[dict]:
    if name == "kernels":
        return kernel_suite()
    if name == "oracles":
        return oracle_suite()
    if name == "convergence":
        return convergence_suite()
    raise ValueError(f"unknown validation suite {name!r}; choose from {SUITES}")
