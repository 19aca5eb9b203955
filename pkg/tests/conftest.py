import numpy as np
import pytest
from hypothesis import settings

from nonlocal_shear.grid import Grid2D, SpectralField

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def grid64():
    return Grid2D(64, 64, 40.0, 40.0)


@pytest.fixture
def grid16():
    return Grid2D(16, 16, 2 * np.pi, 2 * np.pi)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def band_limited(grid, rng, fraction=0.25, amplitude=1.0):
    """Random real field whose modes satisfy |j| <= fraction * n on each axis."""
    coeffs = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    keep_x = np.abs(grid.mode_x) <= fraction * grid.nx
    keep_y = np.abs(grid.mode_y) <= fraction * grid.ny
    coeffs *= keep_x[:, None] & keep_y[None, :]
    f = SpectralField.from_fourier(grid, coeffs)
    real = f.real
    return SpectralField.from_real(grid, amplitude * real / np.max(np.abs(real)))


def gaussian_bump(grid, amplitude=0.1, sigma=2.0):
    return SpectralField.from_function(grid, lambda x, y: amplitude * np.exp(-(x * x + y * y) / (2 * sigma**2)))
