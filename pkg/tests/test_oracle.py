import math

import numpy as np
import pytest

from conftest import band_limited, gaussian_bump
from nonlocal_shear import kernels
from nonlocal_shear import nonlinearity as nl
from nonlocal_shear.grid import Grid2D, SpectralField, fft2, ifft2
from nonlocal_shear.integrator import SimState, StepControl, run
from nonlocal_shear.operators import OperatorContext, apply_K
from nonlocal_shear.oracle import (
    DenseField,
    direct_convolution,
    finite_difference_K,
    kernel_samples,
    picard_contraction_threshold,
    picard_solve,
)
from nonlocal_shear.validation import convolution_errors, fd_order


class TestDirectConvolution:
    def test_dirac_identity(self, grid16, rng):
        f = DenseField(grid16, rng.standard_normal(grid16.shape))
        out = direct_convolution(kernel_samples(kernels.dirac(), grid16), f)
        np.testing.assert_allclose(out.values, f.values, atol=1e-10)

    def test_matches_spectral(self):
        assert max(convolution_errors(20)) <= 1e-10

    def test_commutative(self, grid16, rng):
        k = kernel_samples(kernels.bessel_k0(), grid16)
        f = DenseField(grid16, rng.standard_normal(grid16.shape))
        a = direct_convolution(k, f).values
        b = direct_convolution(f, k).values
        np.testing.assert_allclose(a, b, atol=1e-10 * np.max(np.abs(a)))

    def test_size_cap(self):
        g = Grid2D(128, 64, 1.0, 1.0)
        z = DenseField(g, np.zeros(g.shape))
        with pytest.raises(ValueError, match="capped"):
            direct_convolution(z, z)

    def test_rejects_non_finite(self, grid16):
        with pytest.raises(ValueError):
            DenseField(grid16, np.full(grid16.shape, np.inf))


class TestPicard:
    def test_free_drift_one_iteration(self, rng):
        g = Grid2D(32, 32, 10.0, 10.0)
        ctx = OperatorContext(g, kernels.bessel_k0(), nl.powerlaw(0.0, 1.0))
        phi, psi = band_limited(g, rng), band_limited(g, rng)
        res = picard_solve(ctx, phi, psi, 0.4, n_iter=4)
        assert res.residuals == [0.0] * 4
        np.testing.assert_allclose(res.state.w.real, phi.real + 0.4 * psi.real, atol=1e-15)

    def test_linear_mode_quadrature_convergence(self):
        g = Grid2D(32, 32, 20.0, 20.0)
        ctx = OperatorContext(g, kernels.bessel_k0(), nl.quadratic())
        xi = 2 * math.pi * 3 / g.lx
        omega = xi / math.sqrt(1 + xi * xi)
        phi = SpectralField.from_function(g, lambda x, y: np.cos(xi * x) + 0 * y)
        exact = math.cos(omega * 0.5) * phi.real
        errs = []
        for q in (17, 33, 65):
            res = picard_solve(ctx, phi, SpectralField.zeros(g), 0.5, n_iter=10, quad_points=q)
            errs.append(np.max(np.abs(res.state.w.real - exact)))
        assert errs[-1] < 1e-5
        assert math.log2(errs[1] / errs[2]) >= 1.9

    def test_matches_rk4(self):
        g = Grid2D(64, 64, 40.0, 40.0)
        ctx = OperatorContext(g, kernels.bessel_k0(), nl.linear_plus(nl.powerlaw(1.0, 2.0)))
        phi = gaussian_bump(g)
        res = picard_solve(ctx, phi, SpectralField.zeros(g), 0.25, n_iter=8)
        rk = run(ctx, SimState(phi, SpectralField.zeros(g)), StepControl(dt=0.0125, t_end=0.25))
        assert np.max(np.abs(res.state.w.real - rk.final_state.w.real)) <= 1e-6
        assert res.contracted

    def test_divergence_reported(self, rng):
        g = Grid2D(32, 32, 10.0, 10.0)
        ctx = OperatorContext(g, kernels.dirac(), nl.quadratic())
        phi = band_limited(g, rng, 0.3)
        res = picard_solve(ctx, phi, SpectralField.zeros(g), 8.0, n_iter=6, quad_points=129)
        assert not res.contracted
        assert "t_end too large" in res.message

    def test_contraction_threshold(self, rng):
        g = Grid2D(32, 32, 10.0, 10.0)
        ctx = OperatorContext(g, kernels.dirac(), nl.quadratic())
        phi = band_limited(g, rng, 0.3)
        t = picard_contraction_threshold(ctx, phi, SpectralField.zeros(g), n_iter=6)
        assert 0 < t < 8.0

    @pytest.mark.parametrize("kw", [dict(t_end=0.0), dict(t_end=0.1, n_iter=3), dict(t_end=0.1, quad_points=1)])
    def test_preconditions(self, grid16, kw):
        ctx = OperatorContext(grid16, kernels.bessel_k0(), nl.quadratic())
        z = SpectralField.zeros(grid16)
        with pytest.raises(ValueError):
            picard_solve(ctx, z, z, **kw)


class TestFiniteDifferenceK:
    def test_constant(self, grid16):
        ctx = OperatorContext(grid16, kernels.bessel_k0(), nl.powerlaw(1.0, 2.0))
        w = SpectralField.from_real(grid16, np.full(grid16.shape, 2.5))
        assert np.max(np.abs(finite_difference_K(ctx, w).values)) < 1e-14
        assert np.max(np.abs(apply_K(ctx, w).real)) < 1e-14

    def test_five_point_laplacian(self, rng):
        g = Grid2D(16, 24, 3.0, 5.0)
        ctx = OperatorContext(g, kernels.dirac(), nl.quadratic())
        u = rng.standard_normal(g.shape)
        lap = (np.roll(u, 1, 0) - 2 * u + np.roll(u, -1, 0)) / g.hx**2 + (
            np.roll(u, 1, 1) - 2 * u + np.roll(u, -1, 1)
        ) / g.hy**2
        out = finite_difference_K(ctx, SpectralField.from_real(g, u)).values
        np.testing.assert_allclose(out, lap, atol=1e-12 * np.max(np.abs(lap)))

    def test_order(self):
        assert fd_order() >= 1.9

    def test_rejects_order(self, grid16):
        ctx = OperatorContext(grid16, kernels.bessel_k0(), nl.quadratic())
        with pytest.raises(ValueError):
            finite_difference_K(ctx, SpectralField.zeros(grid16), h_order=4)
