"""
Periodic 2D grid, Fourier transforms and discrete norms.

Conventions
-----------
- Box is ``[-lx/2, lx/2) x [-ly/2, ly/2)``; arrays are indexed ``[i, j]`` with
  ``i`` along x and ``j`` along y.
- Forward transform has no prefactor, inverse carries ``1/(nx*ny)``
  (``scipy.fft`` "backward" normalization).
- Wavenumbers are ``2*pi*wrap(j)/lx`` with ``wrap(j)`` in ``[-nx/2, nx/2)``.
- Norms approximate integrals over the box with quadrature weight
  ``lx*ly/(nx*ny)`` per grid point, so for a Fourier coefficient array
  ``fh`` the squared L2 norm is ``lx*ly/(nx*ny)**2 * sum |fh|^2``.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.fft

from nonlocal_shear.errors import NonFiniteError

_THREADS_ENV = "NONLOCAL_SHEAR_THREADS"


def fft_workers() -> int:
    """Worker count for scipy.fft, capped by ``NONLOCAL_SHEAR_THREADS``."""
    raw = os.environ.get(_THREADS_ENV)
    if raw is None:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def fft2(a: np.ndarray) -> np.ndarray:
    return scipy.fft.fft2(a, workers=fft_workers())


def ifft2(a: np.ndarray) -> np.ndarray:
    return scipy.fft.ifft2(a, workers=fft_workers())


def wrap_indices(n: int) -> np.ndarray:
    """Integer mode numbers in FFT order, mapped to ``[-n/2, n/2)``."""
    return np.fft.fftfreq(n, d=1.0 / n).astype(int)


@dataclass(frozen=True)
class Grid2D:
    """Uniform periodic grid of ``nx`` by ``ny`` points on an ``lx`` by ``ly`` box."""

    nx: int
    ny: int
    lx: float
    ly: float

    def __post_init__(self):
        for name in ("nx", "ny"):
            n = getattr(self, name)
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n!r}")
        for name in ("lx", "ly"):
            length = getattr(self, name)
            if not (np.isfinite(length) and length > 0):
                raise ValueError(f"{name} must be a positive finite length, got {length!r}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "lx", float(self.lx))
        object.__setattr__(self, "ly", float(self.ly))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def n_points(self) -> int:
        return self.nx * self.ny

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def cell_area(self) -> float:
        """Quadrature weight of one grid point."""
        return self.area / self.n_points

    @cached_property
    def x(self) -> np.ndarray:
        return -0.5 * self.lx + self.hx * np.arange(self.nx)

    @cached_property
    def y(self) -> np.ndarray:
        return -0.5 * self.ly + self.hy * np.arange(self.ny)

    @cached_property
    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, indexing="ij")

    @cached_property
    def mode_x(self) -> np.ndarray:
        return wrap_indices(self.nx)

    @cached_property
    def mode_y(self) -> np.ndarray:
        return wrap_indices(self.ny)

    @cached_property
    def xi_x(self) -> np.ndarray:
        """1D wavenumbers along x in FFT order."""
        return 2.0 * np.pi * self.mode_x / self.lx

    @cached_property
    def xi_y(self) -> np.ndarray:
        return 2.0 * np.pi * self.mode_y / self.ly

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """2D arrays ``(xi_1, xi_2)`` matching the Fourier coefficient layout."""
        return np.meshgrid(self.xi_x, self.xi_y, indexing="ij")

    @cached_property
    def xi_squared(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        return k1 * k1 + k2 * k2

    @cached_property
    def derivative_multipliers(self) -> tuple[np.ndarray, np.ndarray]:
        """``(i*xi_1, i*xi_2)`` with the unpaired Nyquist rows/columns zeroed."""
        kx = self.xi_x.copy()
        ky = self.xi_y.copy()
        kx[self.nx // 2] = 0.0
        ky[self.ny // 2] = 0.0
        dx = np.broadcast_to(1j * kx[:, None], self.shape)
        dy = np.broadcast_to(1j * ky[None, :], self.shape)
        return np.ascontiguousarray(dx), np.ascontiguousarray(dy)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Boolean 2/3-rule pass band: True where the mode is kept."""
        keep_x = np.abs(self.mode_x) <= self.nx / 3
        keep_y = np.abs(self.mode_y) <= self.ny / 3
        return keep_x[:, None] & keep_y[None, :]

    @cached_property
    def boundary_ring(self) -> np.ndarray:
        """Boolean mask of the outermost ring of grid points."""
        ring = np.zeros(self.shape, dtype=bool)
        ring[0, :] = ring[-1, :] = True
        ring[:, 0] = ring[:, -1] = True
        return ring

    def norm_weight(self) -> float:
        """Factor turning ``sum |fh|^2`` into a squared L2 norm over the box."""
        return self.area / float(self.n_points) ** 2

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "lx": self.lx, "ly": self.ly}


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteError(f"{what} has a non-finite entry at grid index {tuple(int(i) for i in bad)}")


class SpectralField:
    """A real field on a :class:`Grid2D` with lazily synchronized Fourier coefficients.

    Either representation may be missing; it is computed on first access.
    Fields are treated as values: operations return new fields and the
    arrays handed out by :attr:`real` and :attr:`fourier` must not be mutated.
    """

    __slots__ = ("grid", "_real", "_fourier")

    def __init__(self, grid: Grid2D, real=None, fourier=None):
        if real is None and fourier is None:
            raise ValueError("SpectralField needs real or Fourier values")
        self.grid = grid
        self._real = None
        self._fourier = None
        if real is not None:
            real = np.asarray(real, dtype=float)
            if real.shape != grid.shape:
                raise ValueError(f"real values have shape {real.shape}, grid is {grid.shape}")
            self._real = real
        if fourier is not None:
            fourier = np.asarray(fourier, dtype=complex)
            if fourier.shape != grid.shape:
                raise ValueError(f"Fourier values have shape {fourier.shape}, grid is {grid.shape}")
            self._fourier = fourier

    @classmethod
    def from_real(cls, grid: Grid2D, values) -> "SpectralField":
        return cls(grid, real=values)

    @classmethod
    def from_fourier(cls, grid: Grid2D, coeffs) -> "SpectralField":
        return cls(grid, fourier=coeffs)

    @classmethod
    def zeros(cls, grid: Grid2D) -> "SpectralField":
        return cls(grid, real=np.zeros(grid.shape), fourier=np.zeros(grid.shape, dtype=complex))

    @classmethod
    def from_function(cls, grid: Grid2D, func) -> "SpectralField":
        """Sample ``func(x, y)`` on the grid mesh."""
        x, y = grid.mesh
        return cls(grid, real=np.broadcast_to(func(x, y), grid.shape).astype(float))

    @property
    def real(self) -> np.ndarray:
        if self._real is None:
            self._real = ifft2(self._fourier).real
        return self._real

    @property
    def fourier(self) -> np.ndarray:
        if self._fourier is None:
            self._fourier = fft2(self._real)
        return self._fourier

    def copy(self) -> "SpectralField":
        return SpectralField(
            self.grid,
            real=None if self._real is None else self._real.copy(),
            fourier=None if self._fourier is None else self._fourier.copy(),
        )

    def is_finite(self) -> bool:
        if self._real is not None:
            return bool(np.all(np.isfinite(self._real)))
        return bool(np.all(np.isfinite(self._fourier)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.real)))

    def _same_grid(self, other: "SpectralField") -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    # Arithmetic is linear, so it can stay in whichever representation is present.
    def _combine(self, other, op):
        self._same_grid(other)
        if self._real is not None and other._real is not None:
            return SpectralField(self.grid, real=op(self._real, other._real))
        return SpectralField(self.grid, fourier=op(self.fourier, other.fourier))

    def __add__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self._combine(other, np.add)

    def __sub__(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        return self._combine(other, np.subtract)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return NotImplemented
        scalar = float(scalar)
        if self._real is not None:
            return SpectralField(self.grid, real=scalar * self._real)
        return SpectralField(self.grid, fourier=scalar * self._fourier)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        return f"SpectralField(grid={self.grid!r}, max_abs={self.max_abs():.6g})"


def derivative(f: SpectralField, axis: str) -> SpectralField:
    """Spectral derivative along ``"x"`` or ``"y"``; the Nyquist mode is dropped."""
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    fh = f.fourier
    _check_finite(fh, "derivative input")
    dx, dy = f.grid.derivative_multipliers
    return SpectralField.from_fourier(f.grid, (dx if axis == "x" else dy) * fh)


def gradient(f: SpectralField) -> tuple[np.ndarray, np.ndarray]:
    """Real-space ``(f_x, f_y)`` arrays."""
    return gradient_arrays(f.grid, f.fourier)


def gradient_arrays(grid: Grid2D, fh: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx, dy = grid.derivative_multipliers
    return ifft2(dx * fh).real, ifft2(dy * fh).real


def dealias(f: SpectralField) -> SpectralField:
    """Zero every mode outside the 2/3-rule pass band."""
    return SpectralField.from_fourier(f.grid, np.where(f.grid.dealias_mask, f.fourier, 0.0))


def l2_norm(f: SpectralField) -> float:
    """Real-space quadrature L2 norm."""
    return float(np.sqrt(f.grid.cell_area * np.sum(f.real**2)))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """Discrete ``H^s`` norm ``(sum (1+|xi|^2)^s |fh|^2 * lx*ly/N^2)^(1/2)``.

    At ``s = 0`` this agrees with :func:`l2_norm` by Parseval.
    """
    if not np.isfinite(s):
        raise ValueError(f"Sobolev order must be finite, got {s!r}")
    g = f.grid
    weight = (1.0 + g.xi_squared) ** s
    return float(np.sqrt(g.norm_weight() * np.sum(weight * np.abs(f.fourier) ** 2)))


def sup_norm_gradient(f: SpectralField) -> float:
    """Grid maximum of ``|grad f|``."""
    fx, fy = gradient(f)
    return float(np.sqrt(np.max(fx * fx + fy * fy)))


def xs_norm(f: SpectralField, s: float) -> float:
    """``||f||_s + ||f_x||_inf + ||f_y||_inf``."""
    fx, fy = gradient(f)
    return sobolev_norm(f, s) + float(np.max(np.abs(fx))) + float(np.max(np.abs(fy)))


def boundary_amplitude(f: SpectralField) -> float:
    """Max ``|f|`` on the outermost grid ring relative to max ``|f|`` overall.

    Zero fields report 0. This is telemetry for the periodic-box truncation of
    the whole-plane problem, not an error bound.
    """
    values = np.abs(f.real)
    peak = float(values.max())
    if peak == 0.0:
        return 0.0
    return float(values[f.grid.boundary_ring].max()) / peak


# Snapshot format: raw little-endian float64, row-major (x index slowest),
# plus a JSON sidecar with the grid, time and field name.


def write_snapshot(path, f: SpectralField, time: float, name: str) -> tuple[Path, Path]:
    path = Path(path)
    raw_path = path.with_suffix(".raw")
    meta_path = path.with_suffix(".json")
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(f.real, dtype="<f8").tofile(raw_path)
    meta = dict(f.grid.to_dict(), time=float(time), field=name)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return raw_path, meta_path


def write_snapshot_group(path, fields: dict, time: float) -> tuple[Path, Path]:
    """Write several fields on one grid into one raw file (concatenated in order)."""
    path = Path(path)
    raw_path = path.with_suffix(".raw")
    meta_path = path.with_suffix(".json")
    raw_path.parent.mkdir(parents=True, exist_ok=True)
    names = list(fields)
    grid = fields[names[0]].grid
    with open(raw_path, "wb") as fh:
        for name in names:
            np.ascontiguousarray(fields[name].real, dtype="<f8").tofile(fh)
    meta = dict(grid.to_dict(), time=float(time), field=names[0] if len(names) == 1 else names)
    meta_path.write_text(json.dumps(meta, indent=2) + "\n")
    return raw_path, meta_path


def read_snapshot(path) -> tuple[dict, dict]:
    """Read a snapshot written by :func:`write_snapshot` or :func:`write_snapshot_group`.

    Returns ``(metadata, {field name: SpectralField})``.
    """
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    grid = Grid2D(meta["nx"], meta["ny"], meta["lx"], meta["ly"])
    names = meta["field"] if isinstance(meta["field"], list) else [meta["field"]]
    data = np.fromfile(path.with_suffix(".raw"), dtype="<f8")
    expected = len(names) * grid.n_points
    if data.size != expected:
        raise ValueError(f"{path}: expected {expected} values, found {data.size}")
    blocks = data.reshape(len(names), grid.nx, grid.ny)
    return meta, {name: SpectralField.from_real(grid, block.astype(float)) for name, block in zip(names, blocks)}
