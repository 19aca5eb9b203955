import math

import numpy as np
import pytest

from conftest import gaussian_bump
from nonlocal_shear import kernels
from nonlocal_shear import nonlinearity as nl
from nonlocal_shear.diagnostics import (
    COLUMNS,
    DiagnosticsRecord,
    DiagnosticsRecorder,
    LevineConfig,
    centered_difference,
    compute_record,
    concavity_residual,
    energy,
    energy_drift,
    levine_bound,
    levine_H,
    read_diagnostics_csv,
)
from nonlocal_shear.grid import Grid2D, SpectralField, gradient, l2_norm
from nonlocal_shear.integrator import SimState, StepControl, default_dt, run
from nonlocal_shear.operators import OperatorContext

G = Grid2D(64, 64, 40.0, 40.0)


def zero_state(grid=G, t=0.0):
    return SimState(SpectralField.zeros(grid), SpectralField.zeros(grid), t=t)


def record(E, t=0.0):
    return DiagnosticsRecord(t, E, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)


class TestEnergy:
    def test_zero(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        assert energy(ctx, zero_state()) == 0.0

    def test_single_mode_velocity(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        xi = 2 * math.pi * 3 / G.lx
        psi = SpectralField.from_function(G, lambda x, y: 0.7 * np.sin(xi * y) + 0 * x)
        s = SimState(SpectralField.zeros(G), psi)
        assert energy(ctx, s) == pytest.approx(0.5 * (1 + xi * xi) * l2_norm(psi) ** 2, rel=1e-13)

    def test_negative_square_bump(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        phi = gaussian_bump(G, 1.0)
        wx, wy = gradient(phi)
        expected = -G.cell_area * np.sum((wx * wx + wy * wy) ** 2)
        e = energy(ctx, SimState(phi, SpectralField.zeros(G)))
        assert e < 0
        assert e == pytest.approx(expected, rel=1e-14)


class TestLevine:
    def test_trivial_data_closed_form(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        cfg = LevineConfig(nu=0.5, b=0.3, t0=2.0)
        s = zero_state(t=1.5)
        H, Hp, Hpp = levine_H(ctx, s, cfg)
        tau = 3.5
        assert (H, Hp, Hpp) == pytest.approx((0.3 * tau**2, 0.6 * tau, 0.6))
        res = concavity_residual(H, Hp, Hpp, cfg.nu)
        assert res == pytest.approx(-(2 + 4 * 0.5) * 0.09 * tau**2)
        assert res < 0

    def test_zero_velocity_derivative(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        s = SimState(gaussian_bump(G, 1.0), SpectralField.zeros(G))
        cfg = LevineConfig(0.5, 0.4, 1.7)
        assert levine_H(ctx, s, cfg)[1] == pytest.approx(2 * 0.4 * 1.7, rel=1e-14)

    def test_bound(self):
        assert levine_bound(0.5, 1.0, 2.0) == 1.0
        assert levine_bound(LevineConfig(0.5, 1.0, 1.0), 2.0, 4.0) == 1.0
        with pytest.raises(ValueError):
            levine_bound(0.5, 1.0, -1.0)

    def test_auto_config(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        s = SimState(gaussian_bump(G, 1.0), SpectralField.zeros(G))
        e0 = energy(ctx, s)
        cfg = LevineConfig.for_initial_state(ctx, s, 0.5)
        assert cfg.b == pytest.approx(-2 * e0)
        assert cfg.t0 == pytest.approx(max(1.0, 1.0 / cfg.b))
        with pytest.raises(ValueError, match="violates"):
            LevineConfig.for_initial_state(ctx, s, 0.5, b=-3 * e0)

    def test_auto_config_needs_negative_energy(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.quadratic())
        s = SimState(gaussian_bump(G), SpectralField.zeros(G))
        with pytest.raises(ValueError, match="not negative"):
            LevineConfig.for_initial_state(ctx, s, 0.5)

    def test_t0_raised_until_derivative_positive(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        phi = gaussian_bump(G, 1.0)
        s = SimState(phi, -3.0 * phi)
        cfg = LevineConfig.for_initial_state(ctx, s, 0.5, b=0.5, t0=0.01)
        assert cfg.t0 > 0.01
        assert levine_H(ctx, s, cfg)[1] > 0

    def test_monitor_only(self):
        cfg = LevineConfig.monitor_only()
        assert (cfg.b, cfg.t0) == (0.0, 1.0)
        with pytest.raises(ValueError):
            LevineConfig(0.5, -1.0, 1.0)
        with pytest.raises(ValueError):
            LevineConfig(0.0, 1.0, 1.0)


class TestDrift:
    def test_constant_series(self):
        assert energy_drift([record(0.25, t) for t in range(5)]) == 0.0

    def test_scale(self):
        assert energy_drift([record(10.0), record(10.5)]) == pytest.approx(0.05)
        assert energy_drift([record(0.1), record(0.15)]) == pytest.approx(0.05)

    def test_needs_two(self):
        with pytest.raises(ValueError):
            energy_drift([record(1.0)])

    def test_rk4_drift_shrinks(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.linear_plus(nl.powerlaw(1.0, 2.0)))
        s0 = SimState(gaussian_bump(G, 0.3), SpectralField.zeros(G))
        cfg = LevineConfig.monitor_only()
        drifts = []
        for dt in (0.2, 0.1):
            rec = DiagnosticsRecorder(ctx, cfg)
            run(ctx, s0, StepControl(dt=dt, t_end=5.0), [rec])
            drifts.append(energy_drift(rec.records))
        assert drifts[0] / drifts[1] >= 10


class TestRecorder:
    def test_csv_round_trip(self, tmp_path):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
        s0 = SimState(gaussian_bump(G, 1.0), SpectralField.zeros(G))
        cfg = LevineConfig.for_initial_state(ctx, s0, 0.5)
        path = tmp_path / "d.csv"
        rec = DiagnosticsRecorder(ctx, cfg, every=3, path=path)
        out = run(ctx, s0, StepControl(dt=0.1, t_end=1.0), [rec])
        rec.finalize(out.final_state)
        data = read_diagnostics_csv(path)
        assert tuple(data) == COLUMNS
        np.testing.assert_array_equal(data["t"], [r.t for r in rec.records])
        np.testing.assert_array_equal(data["H"], [r.H for r in rec.records])
        assert list(np.round(data["t"], 12)) == [0.0, 0.3, 0.6, 0.9, 1.0]

    def test_record_fields(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.quadratic())
        r = compute_record(ctx, zero_state(), LevineConfig.monitor_only())
        assert r.is_finite()
        assert all(getattr(r, c) == 0.0 for c in COLUMNS)

    def test_bad_cadence(self):
        ctx = OperatorContext(G, kernels.bessel_k0(), nl.quadratic())
        with pytest.raises(ValueError):
            DiagnosticsRecorder(ctx, LevineConfig.monitor_only(), every=0)


def test_centered_difference():
    t = np.linspace(0, 1, 11)
    tc, d = centered_difference(t, t**2)
    np.testing.assert_allclose(d, 2 * tc)


def _levine_series(dt, t_end=2.0):
    ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
    s0 = SimState(gaussian_bump(G, 1.0), SpectralField.zeros(G))
    rec = DiagnosticsRecorder(ctx, LevineConfig.for_initial_state(ctx, s0, 0.5))
    run(ctx, s0, StepControl(dt=dt, t_end=t_end), [rec])
    t = [r.t for r in rec.records]
    _, d1 = centered_difference(t, [r.H for r in rec.records])
    return np.max(np.abs(d1 - np.array([r.Hprime for r in rec.records])[1:-1]))


def test_blowup_series_consistency_trends_to_second_order():
    # pre-asymptotic on the steepening blow-up profile; the order climbs toward 2
    e = [_levine_series(dt) for dt in (0.2, 0.1, 0.05)]
    p1, p2 = math.log2(e[0] / e[1]), math.log2(e[1] / e[2])
    assert p2 > p1 > 1.6


def test_blowup_residual_nonnegative_while_resolved():
    ctx = OperatorContext(G, kernels.bessel_k0(), nl.powerlaw(-1.0, 2.0))
    s0 = SimState(gaussian_bump(G, 1.0), SpectralField.zeros(G))
    cfg = LevineConfig.for_initial_state(ctx, s0, 0.5)
    rec = DiagnosticsRecorder(ctx, cfg)
    out = run(ctx, s0, StepControl(dt=default_dt(ctx), t_end=40.0, sup_grad_factor=10.0), [rec])
    assert out.blew_up
    assert min(r.normalized_residual for r in rec.records) >= -1e-6
