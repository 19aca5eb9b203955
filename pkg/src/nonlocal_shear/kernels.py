"""
Convolution kernels represented by their Fourier symbols.

Every kernel in the catalogue is a nonnegative even symbol ``beta_hat(xi)``
with a decay class ``beta_hat <= C (1+|xi|^2)^(-r/2)``. Real-space kernels are
never evaluated; all computation happens on the symbol.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from nonlocal_shear.grid import Grid2D

SymbolFunc = Callable[[np.ndarray, np.ndarray], np.ndarray]

# Ulp-level slack so equality cases of the decay bound (e.g. bessel_k0 with C=1) pass.
_BOUND_RTOL = 8 * np.finfo(float).eps


@dataclass(frozen=True, eq=False)
class KernelSymbol:
    """Fourier multiplier of a convolution kernel plus its decay metadata.

    ``r`` is ``math.inf`` for super-polynomially decaying symbols; validation
    then uses ``effective_r``. ``satisfies_decay`` is False for the Dirac
    measure, which is kept only as the local limit for cross-checks.
    """

    name: str
    symbol: SymbolFunc
    r: float
    C: float
    params: dict = field(default_factory=dict)
    effective_r: float | None = None
    satisfies_decay: bool = True

    def __call__(self, xi1, xi2):
        out = self.symbol(np.asarray(xi1, dtype=float), np.asarray(xi2, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    def on_grid(self, grid: Grid2D) -> np.ndarray:
        """Symbol sampled at the grid wavenumbers, in FFT layout."""
        k1, k2 = grid.wavenumbers
        return np.broadcast_to(self.symbol(k1, k2), grid.shape).astype(float)

    @property
    def validation_r(self) -> float:
        return self.effective_r if math.isinf(self.r) else self.r

    def __repr__(self):
        return f"KernelSymbol(name={self.name!r}, r={self.r}, C={self.C}, params={self.params})"


def _gaussian_symbol(xi1, xi2):
    return np.exp(-0.5 * (xi1 * xi1 + xi2 * xi2))


def gaussian_decay_constant(r: float) -> float:
    """``sup_rho exp(-rho^2/2) (1+rho^2)^(r/2)``, attained at ``1+rho^2 = r`` when ``r >= 1``."""
    if r <= 1.0:
        return 1.0
    return math.exp(-0.5 * (r - 1.0)) * r ** (0.5 * r)


def gaussian(effective_r: float = 10.0) -> KernelSymbol:
    """Gaussian kernel, symbol ``exp(-|xi|^2/2)``; decays faster than any power."""
    if not effective_r >= 2.0:
        raise ValueError(f"effective_r must be >= 2, got {effective_r!r}")
    return KernelSymbol(
        name="gaussian",
        symbol=_gaussian_symbol,
        r=math.inf,
        C=gaussian_decay_constant(effective_r),
        params={},
        effective_r=float(effective_r),
    )


def _bessel_symbol(xi1, xi2):
    return 1.0 / (1.0 + xi1 * xi1 + xi2 * xi2)


def bessel_k0() -> KernelSymbol:
    """Modified Bessel (K0) kernel, symbol ``(1+|xi|^2)^-1``, Green's function of ``1 - Laplacian``."""
    return KernelSymbol(name="bessel_k0", symbol=_bessel_symbol, r=2.0, C=1.0)


def bi_helmholtz_decay_constant(gamma1: float, gamma2: float) -> float:
    """``sup_x (1+x)^2 / (1 + gamma1 x + gamma2 x^2)`` over ``x = |xi|^2 >= 0``."""
    candidates = [1.0, 1.0 / gamma2]
    denom = gamma1 - 2.0 * gamma2
    if denom != 0.0:
        x = (gamma1 - 2.0) / denom
        if x > 0.0:
            candidates.append((1.0 + x) ** 2 / (1.0 + gamma1 * x + gamma2 * x * x))
    return max(candidates)


def bi_helmholtz(c1: float, c2: float) -> KernelSymbol:
    """Bi-Helmholtz kernel, symbol ``1/(1 + g1|xi|^2 + g2|xi|^4)``.

    ``g1 = c1^2 + c2^2`` and ``g2 = c1^2 c2^2``. The real-space form divides by
    ``c1^2 - c2^2``, so ``c1 == c2`` is rejected.
    """
    c1 = float(c1)
    c2 = float(c2)
    if not (c1 > 0 and c2 > 0 and math.isfinite(c1) and math.isfinite(c2)):
        raise ValueError(f"bi_helmholtz needs positive c1, c2; got c1={c1!r}, c2={c2!r}")
    if c1 == c2:
        raise ValueError(f"bi_helmholtz needs c1 != c2 (real-space kernel divides by c1^2 - c2^2); got {c1}")
    gamma1 = c1 * c1 + c2 * c2
    gamma2 = c1 * c1 * c2 * c2

    def symbol(xi1, xi2):
        k2 = xi1 * xi1 + xi2 * xi2
        return 1.0 / (1.0 + gamma1 * k2 + gamma2 * k2 * k2)

    return KernelSymbol(
        name="bi_helmholtz",
        symbol=symbol,
        r=4.0,
        C=bi_helmholtz_decay_constant(gamma1, gamma2),
        params={"c1": c1, "c2": c2, "gamma1": gamma1, "gamma2": gamma2},
    )


def _dirac_symbol(xi1, xi2):
    return np.ones(np.broadcast(xi1, xi2).shape)


def dirac() -> KernelSymbol:
    """Dirac measure: identity multiplier, recovering the local quasilinear wave equation."""
    return KernelSymbol(name="dirac", symbol=_dirac_symbol, r=2.0, C=1.0, satisfies_decay=False)


def tabulated(path, grid: Grid2D, r: float, C: float) -> KernelSymbol:
    """Kernel read from a CSV of ``xi1, xi2, value`` rows on the exact grid wavenumbers.

    A header row is allowed. Every grid wavenumber must be present. Lookups at
    wavenumbers off the grid raise ``ValueError``.
    """
    path = Path(path)
    table = np.full(grid.shape, np.nan)
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                xi1, xi2, value = (float(v) for v in row[:3])
            except ValueError:
                if lineno == 1:
                    continue
                raise ValueError(f"{path}:{lineno}: expected three numbers, got {row!r}")
            i, j = _grid_index(grid, xi1, xi2)
            table[i, j] = value
    if np.isnan(table).any():
        missing = int(np.isnan(table).sum())
        raise ValueError(f"{path}: {missing} grid wavenumbers have no tabulated value")

    def symbol(xi1, xi2):
        xi1, xi2 = np.broadcast_arrays(np.asarray(xi1, float), np.asarray(xi2, float))
        i, j = _grid_index(grid, xi1, xi2)
        return table[i, j]

    return KernelSymbol(name="tabulated", symbol=symbol, r=float(r), C=float(C), params={"path": str(path)})


def _grid_index(grid: Grid2D, xi1, xi2):
    m1 = np.asarray(xi1) * grid.lx / (2 * np.pi)
    m2 = np.asarray(xi2) * grid.ly / (2 * np.pi)
    r1 = np.rint(m1)
    r2 = np.rint(m2)
    if np.any(np.abs(m1 - r1) > 1e-6) or np.any(np.abs(m2 - r2) > 1e-6):
        raise ValueError("wavenumber is not on the grid")
    if np.any(r1 < -grid.nx // 2) or np.any(r1 >= grid.nx // 2) or np.any(r2 < -grid.ny // 2) or np.any(r2 >= grid.ny // 2):
        raise ValueError("wavenumber outside the grid band")
    return r1.astype(int) % grid.nx, r2.astype(int) % grid.ny


def write_tabulated(path, kernel: KernelSymbol, grid: Grid2D) -> None:
    """Dump ``kernel`` on ``grid`` in the tabulated CSV format."""
    k1, k2 = grid.wavenumbers
    values = kernel.on_grid(grid)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["xi1", "xi2", "value"])
        for a, b, v in zip(k1.ravel(), k2.ravel(), values.ravel()):
            writer.writerow([repr(float(a)), repr(float(b)), repr(float(v))])


BUILTINS = {
    "gaussian": gaussian,
    "bessel_k0": bessel_k0,
    "bi_helmholtz": bi_helmholtz,
    "dirac": dirac,
}


@dataclass(frozen=True)
class ValidationReport:
    kernel: str
    r: float
    C: float
    min_symbol: float
    max_symbol: float
    empirical_C: float
    nonnegative: bool
    within_bound: bool

    @property
    def passed(self) -> bool:
        return self.nonnegative and self.within_bound

    def as_row(self) -> dict:
        return {
            "kernel": self.kernel,
            "r": self.r,
            "C": self.C,
            "min_symbol": self.min_symbol,
            "max_symbol": self.max_symbol,
            "empirical_C": self.empirical_C,
            "passed": self.passed,
        }


def validate_decay(k: KernelSymbol, grid: Grid2D, r: float | None = None, C: float | None = None) -> ValidationReport:
    """Check nonnegativity and ``symbol <= C (1+|xi|^2)^(-r/2)`` on every grid wavenumber.

    ``r`` and ``C`` default to the kernel's stored values (``effective_r`` for
    super-polynomial symbols). The report carries the empirical grid constant
    ``max symbol * (1+|xi|^2)^(r/2)``.
    """
    r = k.validation_r if r is None else float(r)
    C = k.C if C is None else float(C)
    values = k.on_grid(grid)
    weight = (1.0 + grid.xi_squared) ** (0.5 * r)
    empirical = float(np.max(values * weight))
    return ValidationReport(
        kernel=k.name,
        r=r,
        C=C,
        min_symbol=float(values.min()),
        max_symbol=float(values.max()),
        empirical_C=empirical,
        nonnegative=bool(values.min() >= 0.0),
        within_bound=bool(empirical <= C * (1.0 + _BOUND_RTOL)),
    )
