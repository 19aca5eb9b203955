import math

import numpy as np
import pytest

from conftest import band_limited, gaussian_bump
from nonlocal_shear import kernels
from nonlocal_shear import nonlinearity as nl
from nonlocal_shear.diagnostics import energy
from nonlocal_shear.errors import ObserverError
from nonlocal_shear.grid import Grid2D, SpectralField
from nonlocal_shear.integrator import (
    COMPLETED,
    FIELD_MAGNITUDE_EXCEEDED,
    MAX_STEPS,
    NON_FINITE,
    SUP_GRADIENT_EXCEEDED,
    SimState,
    StepControl,
    default_dt,
    run,
    step_leapfrog,
    step_rk4,
)
from nonlocal_shear.operators import OperatorContext

GRID = Grid2D(32, 32, 20.0, 20.0)


def linear_mode(grid=GRID, j=2):
    ctx = OperatorContext(grid, kernels.bessel_k0(), nl.quadratic())
    xi = 2 * math.pi * j / grid.lx
    omega = xi / math.sqrt(1 + xi * xi)
    w0 = SpectralField.from_function(grid, lambda x, y: np.cos(xi * x) + 0 * y)
    return ctx, SimState(w0, SpectralField.zeros(grid)), omega, w0.real


class TestStepControl:
    @pytest.mark.parametrize(
        "kw",
        [dict(dt=0.0, t_end=1.0), dict(dt=2.0, t_end=1.0), dict(dt=0.1, t_end=1.0, scheme="euler"), dict(dt=0.1, t_end=1.0, max_steps=0)],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            StepControl(**kw)

    def test_threshold(self):
        c = StepControl(dt=0.1, t_end=1.0)
        assert c.threshold(2.0) == 2e6
        assert c.threshold(0.0) == math.inf
        assert StepControl(dt=0.1, t_end=1.0, sup_grad_max=5.0).threshold(2.0) == 5.0


class TestSteppers:
    @pytest.mark.parametrize("stepper", [step_rk4, step_leapfrog])
    def test_free_drift_exact(self, stepper, rng):
        ctx = OperatorContext(GRID, kernels.bessel_k0(), nl.powerlaw(0.0, 1.0))
        phi = band_limited(GRID, rng)
        psi = band_limited(GRID, rng)
        s = SimState(phi, psi)
        for _ in range(10):
            s = stepper(ctx, s, 0.3)
        np.testing.assert_allclose(s.w.real, phi.real + 3.0 * psi.real, atol=1e-13)
        np.testing.assert_allclose(s.v.real, psi.real, atol=1e-15)

    def test_rk4_linear_order(self):
        ctx, s0, omega, w0 = linear_mode()
        period = 2 * math.pi / omega
        errs = []
        for n in (20, 40, 80):
            out = run(ctx, s0, StepControl(dt=period / n, t_end=period))
            errs.append(np.max(np.abs(out.final_state.w.real - w0)))
        orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert min(orders) >= 3.8

    def test_rk4_time_reversal(self, rng):
        ctx = OperatorContext(GRID, kernels.bessel_k0(), nl.linear_plus(nl.powerlaw(1.0, 2.0)))
        s0 = SimState(band_limited(GRID, rng, 0.2, 0.3), band_limited(GRID, rng, 0.2, 0.1), t=1.0)
        back = step_rk4(ctx, step_rk4(ctx, s0, 0.05), -0.05)
        np.testing.assert_allclose(back.w.real, s0.w.real, atol=1e-10)
        np.testing.assert_allclose(back.v.real, s0.v.real, atol=1e-10)

    def test_leapfrog_energy_bounded(self):
        ctx, s0, omega, _ = linear_mode()
        period = 2 * math.pi / omega
        e0 = energy(ctx, s0)
        errors = []
        out = run(
            ctx,
            s0,
            StepControl(dt=period / 20, t_end=100 * period, scheme="leapfrog"),
            [lambda s, g: errors.append(energy(ctx, s) - e0)],
        )
        assert out.completed
        errors = np.abs(errors)
        # no secular drift: late error no larger than early error
        first, last = errors[: len(errors) // 10].max(), errors[-len(errors) // 10 :].max()
        assert last <= 1.05 * first
        assert errors.max() < 0.05 * e0

    def test_leapfrog_nonlinear_order(self):
        ctx = OperatorContext(GRID, kernels.bessel_k0(), nl.linear_plus(nl.powerlaw(1.0, 2.0)))
        s0 = SimState(gaussian_bump(GRID, 0.5, 1.5), SpectralField.zeros(GRID))
        finals = [run(ctx, s0, StepControl(dt=0.2 / 2**i, t_end=2.0, scheme="leapfrog")).final_state.w.real for i in range(3)]
        p = math.log2(np.max(np.abs(finals[0] - finals[1])) / np.max(np.abs(finals[1] - finals[2])))
        assert p >= 1.9


class TestRun:
    def test_zero_data(self):
        ctx = OperatorContext(GRID, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        out = run(ctx, SimState(SpectralField.zeros(GRID), SpectralField.zeros(GRID)), StepControl(dt=0.1, t_end=1.0))
        assert out.status == COMPLETED and out.reason is None
        assert out.final_state.w.max_abs() == 0.0
        assert out.t == 1.0 and out.steps == 10

    def test_snaps_to_t_end(self):
        ctx, s0, _, _ = linear_mode()
        out = run(ctx, s0, StepControl(dt=0.3, t_end=1.0))
        assert out.t == 1.0 and out.steps == 4

    def test_global_scenario_completes(self):
        g = Grid2D(64, 64, 40.0, 40.0)
        ctx = OperatorContext(g, kernels.bessel_k0(), nl.linear_plus(nl.powerlaw(1.0, 2.0)))
        out = run(ctx, SimState(gaussian_bump(g), SpectralField.zeros(g)), StepControl(dt=default_dt(ctx), t_end=10.0))
        assert out.completed
        assert out.sup_grad_final <= 3 * out.sup_grad_initial

    def test_blowup_scenario_halts(self):
        g = Grid2D(64, 64, 40.0, 40.0)
        ctx = OperatorContext(g, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        out = run(ctx, SimState(gaussian_bump(g, 1.0), SpectralField.zeros(g)), StepControl(dt=default_dt(ctx), t_end=40.0))
        assert out.reason == SUP_GRADIENT_EXCEEDED
        assert out.blew_up and 0 < out.t < 40
        assert out.sup_grad_final > out.threshold

    def test_field_magnitude(self):
        ctx, s0, _, _ = linear_mode()
        out = run(ctx, s0, StepControl(dt=0.1, t_end=1.0, field_max=0.5))
        assert out.reason == FIELD_MAGNITUDE_EXCEEDED and out.steps == 1

    def test_max_steps(self):
        ctx, s0, _, _ = linear_mode()
        out = run(ctx, s0, StepControl(dt=0.1, t_end=1.0, max_steps=3))
        assert out.reason == MAX_STEPS and out.steps == 3

    def test_non_finite_with_halving(self):
        F = nl.IsotropicEnergy("exp", F=lambda u: np.expm1(u), Fprime=lambda u: np.exp(u))
        ctx = OperatorContext(GRID, kernels.bessel_k0(), F)
        s0 = SimState(gaussian_bump(GRID, 200.0, 1.0), SpectralField.zeros(GRID))
        out = run(ctx, s0, StepControl(dt=0.1, t_end=1.0, halve_on_nonfinite=True, max_halvings=3))
        assert out.reason == NON_FINITE
        assert out.halvings == 3 and out.dt_final == pytest.approx(0.0125)
        out = run(ctx, s0, StepControl(dt=0.1, t_end=1.0))
        assert out.reason == NON_FINITE and out.halvings == 0

    def test_observers(self):
        ctx, s0, _, _ = linear_mode()
        seen = []
        run(ctx, s0, StepControl(dt=0.25, t_end=1.0), [lambda s, g: seen.append((s.step_index, s.t))])
        assert seen == [(0, 0.0), (1, 0.25), (2, 0.5), (3, 0.75), (4, 1.0)]

    def test_observer_failure(self):
        ctx, s0, _, _ = linear_mode()

        def bad(state, sup):
            if state.step_index == 2:
                raise RuntimeError("boom")

        with pytest.raises(ObserverError, match="boom"):
            run(ctx, s0, StepControl(dt=0.25, t_end=1.0), [bad])

    def test_deterministic(self, rng):
        ctx = OperatorContext(GRID, kernels.gaussian(), nl.linear_plus(nl.powerlaw(1.0, 2.0)))
        s0 = SimState(band_limited(GRID, rng, 0.2, 0.3), SpectralField.zeros(GRID))
        a = run(ctx, s0, StepControl(dt=0.1, t_end=1.0)).final_state.w.real
        b = run(ctx, s0, StepControl(dt=0.1, t_end=1.0)).final_state.w.real
        np.testing.assert_array_equal(a, b)
