import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nonlocal_shear import nonlinearity as nl
from nonlocal_shear.errors import NonFiniteError
from nonlocal_shear.grid import SpectralField


def fields(grid, wx, wy):
    return (SpectralField.from_real(grid, np.full(grid.shape, wx)), SpectralField.from_real(grid, np.full(grid.shape, wy)))


class TestIsotropic:
    def test_rejects_nonzero_at_origin(self):
        with pytest.raises(ValueError):
            nl.IsotropicEnergy("bad", F=lambda u: u + 1.0, Fprime=lambda u: np.ones_like(u))

    def test_rejects_wrong_derivative(self):
        with pytest.raises(ValueError):
            nl.IsotropicEnergy("bad", F=lambda u: u * u, Fprime=lambda u: u)

    def test_rejects_bad_exponent(self):
        with pytest.raises(ValueError):
            nl.powerlaw(1.0, 0.0)

    def test_quadratic_stress_is_gradient(self, grid16, rng):
        wx, wy = rng.standard_normal((2,) + grid16.shape)
        sx, sy = nl.quadratic().stress(wx, wy)
        np.testing.assert_array_equal(sx, wx)
        np.testing.assert_array_equal(sy, wy)

    def test_zero_gradient_zero_stress(self, grid16):
        for F in (nl.quadratic(), nl.powerlaw(-1, 2), nl.powerlaw(-1, 0.5)):
            sx, sy = nl.stress_isotropic(F, *fields(grid16, 0.0, 0.0))
            assert np.all(sx.real == 0) and np.all(sy.real == 0)

    def test_square_hand_value(self, grid16):
        sx, sy = nl.stress_isotropic(nl.powerlaw(1.0, 2.0), *fields(grid16, 1.0, 2.0), dealiased=False)
        np.testing.assert_allclose(sx.real, 20.0)
        np.testing.assert_allclose(sy.real, 40.0)

    def test_non_finite_derivative_raises(self):
        F = nl.IsotropicEnergy(
            "log", F=lambda u: u * np.log1p(u), Fprime=lambda u: np.log1p(u) + u / (1 + u), check_derivative=True
        )
        with pytest.raises(NonFiniteError):
            F.stress(np.array([np.nan, 1.0]), np.array([0.0, 0.0]))

    def test_linear_plus(self):
        F = nl.linear_plus(nl.powerlaw(1.0, 2.0))
        u = np.array([0.0, 1.0, 3.0])
        np.testing.assert_allclose(F.F(u), u / 2 + u * u)
        np.testing.assert_allclose(F.Fprime(u), 0.5 + 2 * u)


class TestAnisotropic:
    def test_reduction_matches_isotropic(self, grid16, rng):
        F = nl.quadratic()
        Ft = nl.from_isotropic(F)
        wx, wy = rng.standard_normal((2,) + grid16.shape)
        np.testing.assert_array_equal(Ft.stress(wx, wy)[0], F.stress(wx, wy)[0])
        np.testing.assert_array_equal(Ft.density(wx, wy), F.density(wx, wy))

    def test_hand_gradient(self, grid16):
        Ft = nl.AnisotropicEnergy("p2q", Ftilde=lambda p, q: p * p * q, grad=lambda p, q: (2 * p * q, p * p))
        sx, sy = nl.stress_anisotropic(Ft, *fields(grid16, 1.0, 2.0), dealiased=False)
        np.testing.assert_allclose(sx.real, 4.0)
        np.testing.assert_allclose(sy.real, 1.0)

    def test_rejects_inconsistent_gradient(self):
        with pytest.raises(ValueError):
            nl.AnisotropicEnergy("bad", Ftilde=lambda p, q: p * p * q, grad=lambda p, q: (p * q, p * p))

    def test_orthotropic_zero(self, grid16):
        Ft = nl.orthotropic(1.0, 2.0, -1.0, 2.0)
        sx, sy = nl.stress_anisotropic(Ft, *fields(grid16, 0.0, 0.0))
        assert np.all(sx.real == 0) and np.all(sy.real == 0)

    @given(st.floats(-3, 3), st.floats(-3, 3))
    def test_pairing_density(self, p, q):
        Ft = nl.from_isotropic(nl.powerlaw(-1.0, 2.0))
        F = nl.powerlaw(-1.0, 2.0)
        a = Ft.pairing_density(np.array([p]), np.array([q]))
        b = F.pairing_density(np.array([p]), np.array([q]))
        assert a[0] == pytest.approx(b[0], rel=1e-12, abs=1e-12)


class TestGlobalCondition:
    @pytest.mark.parametrize("a,q", [(1.0, 2.0), (0.5, 1.0), (2.0, 0.5)])
    @pytest.mark.parametrize("k", [1e-3, 1.0, 10.0])
    def test_positive_power_law_passes(self, a, q, k):
        rep = nl.check_global_condition(nl.powerlaw(a, q), k, 100.0)
        assert rep.passed and rep.closed_form

    @pytest.mark.parametrize("k", [0.1, 1.0, 5.0])
    def test_negative_square_fails(self, k):
        rep = nl.check_global_condition(nl.powerlaw(-1.0, 2.0), k, 10 * k)
        assert not rep.passed
        assert rep.worst < 0
        assert rep.closed_form is False

    def test_linear_equality_case(self):
        rep = nl.check_global_condition(nl.powerlaw(-1.0, 1.0), 1.0, 100.0)
        assert rep.passed and rep.closed_form

    def test_report_is_scoped(self):
        rep = nl.check_global_condition(nl.quadratic(), 1.0, 50.0, n_samples=200)
        assert rep.sample_range[1] == 50.0
        assert rep.sample_range[0] == pytest.approx(50.0e-12)
        assert rep.n_samples == 200

    def test_sampling_validation(self):
        with pytest.raises(ValueError):
            nl.check_global_condition(nl.quadratic(), 1.0, 10.0, n_samples=10)
        with pytest.raises(ValueError):
            nl.check_global_condition(nl.quadratic(), -1.0, 10.0)


class TestBlowupCondition:
    def test_negative_square_equality(self):
        rep = nl.check_blowup_condition(nl.powerlaw(-1.0, 2.0), 0.5, 100.0)
        assert rep.passed and rep.closed_form

    def test_linear_fails(self):
        for nu in (0.01, 0.5, 2.0):
            assert not nl.check_blowup_condition(nl.powerlaw(-1.0, 1.0), nu, 100.0).passed

    @pytest.mark.parametrize("q", [0.5, 0.9, 1.0, 1.1, 1.5, 2.0, 3.0])
    def test_exists_nu_iff_q_above_one(self, q):
        # a < 0: u F' - (1+2nu) F = (1 + 2 nu - q) |a| u^q, nonpositive iff q >= 1 + 2 nu
        nus = np.geomspace(1e-4, 10, 60)
        verdicts = [nl.check_blowup_condition(nl.powerlaw(-1.0, q), nu, 100.0).passed for nu in nus]
        assert any(verdicts) == (q > 1)
        for nu, v in zip(nus, verdicts):
            assert v == (q >= 1 + 2 * nu - 1e-12)

    @given(st.floats(0.05, 4), st.floats(0.01, 3))
    def test_sampled_matches_closed_form(self, q, nu):
        F = nl.powerlaw(-1.0, q)
        rep = nl.check_blowup_condition(F, nu, 100.0)
        if abs(q - (1 + 2 * nu)) > 1e-9:
            assert rep.passed == rep.closed_form


class TestAnisotropicConditions:
    def test_positive_quartic(self):
        Ft = nl.from_isotropic(nl.powerlaw(1.0, 2.0))
        assert nl.check_conditions_anisotropic(Ft, k=0.5, radius=10.0).passed

    def test_negative_quartic_equality(self):
        Ft = nl.from_isotropic(nl.powerlaw(-1.0, 2.0))
        assert nl.check_conditions_anisotropic(Ft, nu=0.5, radius=10.0).passed

    @pytest.mark.parametrize("a,q", [(-1.0, 0.5), (-1.0, 1.0), (-1.0, 2.0), (1.0, 2.0), (-1.0, 3.0)])
    @pytest.mark.parametrize("nu", [0.25, 0.5, 1.0])
    def test_reduction_verdicts_match(self, a, q, nu):
        F = nl.powerlaw(a, q)
        iso = nl.check_blowup_condition(F, nu, 100.0)
        ani = nl.check_conditions_anisotropic(nl.from_isotropic(F), nu=nu, radius=10.0)
        assert iso.passed == ani.passed

    def test_exactly_one_parameter(self):
        Ft = nl.from_isotropic(nl.quadratic())
        with pytest.raises(ValueError):
            nl.check_conditions_anisotropic(Ft, k=1.0, nu=0.5)
        with pytest.raises(ValueError):
            nl.check_conditions_anisotropic(Ft)
