"""
Strain-energy densities, the stresses they induce, and sampled checks of the
global-existence and blow-up hypotheses.

Isotropic energies are functions ``F(u)`` of ``u = |grad w|^2`` with
``F(0) = 0``; their stresses are ``(2 w_x F'(u), 2 w_y F'(u))``. Anisotropic
energies are functions ``Ft(p, q)`` of ``grad w = (p, q)`` with stresses
``grad Ft``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from nonlocal_shear.errors import NonFiniteError
from nonlocal_shear.grid import SpectralField, dealias

# Log-uniform sampling spans this many decades of u below u_max.
_SAMPLE_DECADES = 12
_EQUALITY_RTOL = 1e-12


def _fd_relative_error(f, fprime, points, step=1e-5):
    """Largest relative mismatch between ``fprime`` and a centered difference of ``f``."""
    worst = 0.0
    for u in points:
        h = step * max(abs(u), 1e-3)
        fd = (f(u + h) - f(u - h)) / (2 * h)
        exact = fprime(u)
        scale = max(abs(exact), abs(f(u)) / max(abs(u), 1e-300), 1e-12)
        worst = max(worst, abs(fd - exact) / scale)
    return worst


def _clean_fprime(fp: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Replace a non-finite ``F'`` at exactly zero strain by 0; raise elsewhere.

    Power laws with ``q < 1`` have ``F'(0) = -inf`` while their stress
    ``2 w_x F'(u)`` stays bounded; at a point with zero gradient the stress is
    taken to be zero.
    """
    bad = ~np.isfinite(fp)
    if not bad.any():
        return fp
    at_zero = bad & (u == 0.0)
    if (bad & ~at_zero).any():
        loc = np.argwhere(bad & ~at_zero)[0]
        raise NonFiniteError(
            f"F' is non-finite at grid index {tuple(int(i) for i in loc)} (u={float(u[tuple(loc)])!r})"
        )
    return np.where(at_zero, 0.0, fp)


@dataclass(frozen=True, eq=False)
class IsotropicEnergy:
    """Strain energy ``F(u)``, ``u = |grad w|^2``, with its derivative.

    ``closed_form_global(k)`` and ``closed_form_blowup(nu)`` give exact
    verdicts for built-in families and are None for user energies.
    """

    name: str
    F: Callable
    Fprime: Callable
    params: dict = field(default_factory=dict)
    closed_form_global: Callable | None = None
    closed_form_blowup: Callable | None = None
    check_derivative: bool = True

    def __post_init__(self):
        f0 = float(self.F(np.float64(0.0)))
        if f0 != 0.0:
            raise ValueError(f"energy {self.name!r} must satisfy F(0) = 0, got {f0!r}")
        if self.check_derivative:
            err = _fd_relative_error(
                lambda u: float(self.F(np.float64(u))),
                lambda u: float(self.Fprime(np.float64(u))),
                np.geomspace(1e-3, 10.0, 25),
            )
            if err > 1e-6:
                raise ValueError(f"Fprime of {self.name!r} disagrees with finite differences of F (rel {err:.3g})")

    def density(self, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        return self.F(wx * wx + wy * wy)

    def stress(self, wx: np.ndarray, wy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Pointwise ``(2 w_x F'(u), 2 w_y F'(u))``."""
        u = wx * wx + wy * wy
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            fp = self.Fprime(u)
        fp = _clean_fprime(np.broadcast_to(fp, u.shape), u)
        return 2.0 * wx * fp, 2.0 * wy * fp

    def pairing_density(self, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        """``2 |grad w|^2 F'(|grad w|^2)``, the integrand of ``-<R^2 w_tt, w>``."""
        u = wx * wx + wy * wy
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            fp = self.Fprime(u)
        fp = _clean_fprime(np.broadcast_to(fp, u.shape), u)
        return 2.0 * u * fp

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True, eq=False)
class AnisotropicEnergy:
    """Strain energy ``Ft(p, q)`` of the gradient ``(p, q) = (w_x, w_y)``."""

    name: str
    Ftilde: Callable
    grad: Callable
    params: dict = field(default_factory=dict)
    check_derivative: bool = True

    def __post_init__(self):
        f0 = float(self.Ftilde(np.float64(0.0), np.float64(0.0)))
        if f0 != 0.0:
            raise ValueError(f"energy {self.name!r} must satisfy Ft(0, 0) = 0, got {f0!r}")
        if self.check_derivative:
            rng = np.random.default_rng(7)
            pts = rng.uniform(-2.0, 2.0, size=(16, 2))
            worst = 0.0
            for p, q in pts:
                gp, gq = (float(g) for g in self.grad(np.float64(p), np.float64(q)))
                worst = max(
                    worst,
                    _fd_relative_error(lambda s: float(self.Ftilde(s, q)), lambda s: gp, [p]),
                    _fd_relative_error(lambda s: float(self.Ftilde(p, s)), lambda s: gq, [q]),
                )
            if worst > 1e-6:
                raise ValueError(f"grad of {self.name!r} disagrees with finite differences of Ft (rel {worst:.3g})")

    def density(self, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        return self.Ftilde(wx, wy)

    def stress(self, wx: np.ndarray, wy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sx, sy = self.grad(wx, wy)
        sx = np.broadcast_to(sx, np.shape(wx))
        sy = np.broadcast_to(sy, np.shape(wy))
        for comp in (sx, sy):
            if not np.all(np.isfinite(comp)):
                loc = np.argwhere(~np.isfinite(comp))[0]
                raise NonFiniteError(f"grad Ft is non-finite at grid index {tuple(int(i) for i in loc)}")
        return sx, sy

    def pairing_density(self, wx: np.ndarray, wy: np.ndarray) -> np.ndarray:
        """``grad w . grad Ft(grad w)``."""
        sx, sy = self.stress(wx, wy)
        return wx * sx + wy * sy

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


# ---------------------------------------------------------------------------
# Built-in families


def powerlaw(a: float, q: float) -> IsotropicEnergy:
    """``F(u) = a u^q`` with exact derivative ``a q u^(q-1)``."""
    a = float(a)
    q = float(q)
    if not q > 0:
        raise ValueError(f"power-law exponent must be positive, got {q!r}")

    if a == 0.0:
        def F(u):
            return np.zeros_like(np.asarray(u, dtype=float))

        Fprime = F
    else:
        def F(u):
            return a * np.power(u, q)

        def Fprime(u):
            return a * q * np.power(u, q - 1.0)

    def closed_global(k):
        if a >= 0:
            return True
        return math.isclose(q, 1.0) and k >= -a

    def closed_blowup(nu):
        bound = 1.0 + 2.0 * nu
        if a == 0:
            return True
        if a < 0:
            return q >= bound - 1e-12
        return q <= bound + 1e-12

    return IsotropicEnergy(
        name="powerlaw",
        F=F,
        Fprime=Fprime,
        params={"a": a, "q": q},
        closed_form_global=closed_global,
        closed_form_blowup=closed_blowup,
    )


def linear_plus(G: IsotropicEnergy) -> IsotropicEnergy:
    """``F(u) = u/2 + G(u)``: linear shear response plus a nonlinear correction."""

    def F(u):
        return 0.5 * u + G.F(u)

    def Fprime(u):
        return 0.5 + G.Fprime(u)

    closed_global = closed_blowup = None
    if G.name == "powerlaw":
        a, q = G.params["a"], G.params["q"]

        def closed_global(k):
            if a >= 0:
                return True
            if math.isclose(q, 1.0):
                return k >= -(0.5 + a)
            return False

        def closed_blowup(nu):
            # u F' - (1+2nu) F = -nu u + a (q - 1 - 2nu) u^q
            c = a * (q - 1.0 - 2.0 * nu)
            if c <= 0:
                return True
            if math.isclose(q, 1.0):
                return c <= nu
            return False

    return IsotropicEnergy(
        name="linear_plus",
        F=F,
        Fprime=Fprime,
        params={"G": G.describe()},
        closed_form_global=closed_global,
        closed_form_blowup=closed_blowup,
    )


def quadratic() -> IsotropicEnergy:
    """``F(u) = u/2``: linear elasticity."""
    return powerlaw(0.5, 1.0)


def from_isotropic(F: IsotropicEnergy) -> AnisotropicEnergy:
    """``Ft(p, q) = F(p^2 + q^2)``; stresses are evaluated exactly as in the isotropic path."""

    def Ftilde(p, q):
        return F.F(p * p + q * q)

    def grad(p, q):
        return F.stress(np.asarray(p, dtype=float), np.asarray(q, dtype=float))

    return AnisotropicEnergy(
        name="isotropic_reduction",
        Ftilde=Ftilde,
        grad=grad,
        params={"isotropic": F.describe()},
        check_derivative=False,
    )


def orthotropic(cx: float, cy: float, a: float, q: float) -> AnisotropicEnergy:
    """``Ft(p, q) = Q/2 + a Q^q`` with ``Q = cx p^2 + cy q^2``."""
    cx, cy, a, qe = float(cx), float(cy), float(a), float(q)
    if not (cx > 0 and cy > 0):
        raise ValueError("orthotropic stiffnesses cx, cy must be positive")
    if not qe > 0:
        raise ValueError(f"exponent must be positive, got {qe!r}")

    def Ftilde(p, r):
        Q = cx * p * p + cy * r * r
        return 0.5 * Q + a * np.power(Q, qe)

    def grad(p, r):
        Q = cx * p * p + cy * r * r
        factor = 0.5 + (a * qe * np.power(Q, qe - 1.0) if a != 0.0 else 0.0)
        return 2.0 * cx * p * factor, 2.0 * cy * r * factor

    return AnisotropicEnergy(name="orthotropic", Ftilde=Ftilde, grad=grad, params={"cx": cx, "cy": cy, "a": a, "q": qe})


# ---------------------------------------------------------------------------
# Stresses on fields


def stress_isotropic(F: IsotropicEnergy, wx: SpectralField, wy: SpectralField, dealiased: bool = True):
    """Stress fields ``(2 w_x F'(u), 2 w_y F'(u))``, 2/3-rule filtered unless ``dealiased=False``."""
    return _stress_fields(F, wx, wy, dealiased)


def stress_anisotropic(Ft: AnisotropicEnergy, wx: SpectralField, wy: SpectralField, dealiased: bool = True):
    """Stress fields ``(dFt/dp, dFt/dq)`` evaluated at ``(w_x, w_y)``."""
    return _stress_fields(Ft, wx, wy, dealiased)


def _stress_fields(energy, wx, wy, dealiased):
    if wx.grid != wy.grid:
        raise ValueError("w_x and w_y live on different grids")
    sx, sy = energy.stress(wx.real, wy.real)
    fx = SpectralField.from_real(wx.grid, sx)
    fy = SpectralField.from_real(wx.grid, sy)
    if dealiased:
        fx, fy = dealias(fx), dealias(fy)
    return fx, fy


# ---------------------------------------------------------------------------
# Condition checks


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of a sampled check of a universally quantified energy condition.

    ``worst`` is the extreme value of the checked expression (a minimum for
    lower-bound conditions, a maximum for upper-bound ones) and ``worst_at``
    the sample where it occurs. A pass only covers ``sample_range``.
    """

    condition: str
    parameter: str
    value: float
    passed: bool
    worst: float
    worst_at: float
    sample_range: tuple
    n_samples: int
    tolerance: float
    closed_form: bool | None = None

    def as_row(self) -> dict:
        return {
            "condition": self.condition,
            self.parameter: self.value,
            "passed": self.passed,
            "worst": self.worst,
            "worst_at": self.worst_at,
            "sample_lo": self.sample_range[0],
            "sample_hi": self.sample_range[1],
            "n_samples": self.n_samples,
            "closed_form": self.closed_form,
        }


def _log_samples(hi: float, n: int, decades: float) -> np.ndarray:
    return np.geomspace(hi * 10.0 ** (-decades), hi, n)


def _validate_sampling(hi, n_samples, what):
    if not (hi > 0 and math.isfinite(hi)):
        raise ValueError(f"{what} must be positive and finite, got {hi!r}")
    if n_samples < 100:
        raise ValueError(f"n_samples must be >= 100, got {n_samples!r}")


def check_global_condition(F: IsotropicEnergy, k: float, u_max: float, n_samples: int = 400) -> ConditionReport:
    """Sampled check of ``F(u) >= -k u`` for ``u`` log-uniform in ``(0, u_max]``."""
    if not k > 0:
        raise ValueError(f"k must be positive, got {k!r}")
    _validate_sampling(u_max, n_samples, "u_max")
    u = _log_samples(u_max, n_samples, _SAMPLE_DECADES)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Fu = np.asarray(F.F(u), dtype=float)
    g = Fu + k * u
    i = int(np.argmin(g))
    tol = _EQUALITY_RTOL * max(1.0, float(np.max(np.abs(Fu))))
    return ConditionReport(
        condition="global",
        parameter="k",
        value=float(k),
        passed=bool(g[i] >= -tol),
        worst=float(g[i]),
        worst_at=float(u[i]),
        sample_range=(float(u[0]), float(u[-1])),
        n_samples=n_samples,
        tolerance=tol,
        closed_form=None if F.closed_form_global is None else bool(F.closed_form_global(k)),
    )


def check_blowup_condition(F: IsotropicEnergy, nu: float, u_max: float, n_samples: int = 400) -> ConditionReport:
    """Sampled check of ``u F'(u) <= (1 + 2 nu) F(u)`` for ``u`` log-uniform in ``(0, u_max]``."""
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu!r}")
    _validate_sampling(u_max, n_samples, "u_max")
    u = _log_samples(u_max, n_samples, _SAMPLE_DECADES)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Fu = np.asarray(F.F(u), dtype=float)
        uFp = u * np.asarray(F.Fprime(u), dtype=float)
    h = uFp - (1.0 + 2.0 * nu) * Fu
    i = int(np.argmax(h))
    tol = _EQUALITY_RTOL * max(1.0, float(np.max(np.abs(Fu))), float(np.max(np.abs(uFp))))
    return ConditionReport(
        condition="blowup",
        parameter="nu",
        value=float(nu),
        passed=bool(h[i] <= tol),
        worst=float(h[i]),
        worst_at=float(u[i]),
        sample_range=(float(u[0]), float(u[-1])),
        n_samples=n_samples,
        tolerance=tol,
        closed_form=None if F.closed_form_blowup is None else bool(F.closed_form_blowup(nu)),
    )


def _disk_samples(radius, n_samples, n_angles):
    rho = _log_samples(radius, n_samples, _SAMPLE_DECADES / 2)
    theta = 2.0 * np.pi * np.arange(n_angles) / n_angles
    R, T = np.meshgrid(rho, theta, indexing="ij")
    return R * np.cos(T), R * np.sin(T), rho


def check_conditions_anisotropic(
    Ft: AnisotropicEnergy,
    *,
    k: float | None = None,
    nu: float | None = None,
    radius: float = 10.0,
    n_samples: int = 400,
    n_angles: int = 32,
) -> ConditionReport:
    """Sampled anisotropic condition check; pass exactly one of ``k`` or ``nu``.

    With ``k``: ``Ft(U) >= -k |U|^2``. With ``nu``: ``U . grad Ft(U) <= 2 (1 + 2 nu) Ft(U)``.
    ``U`` is sampled uniformly in angle and log-uniformly in ``|U|`` up to ``radius``,
    so ``|U|^2`` covers the same range as an isotropic check with ``u_max = radius**2``.
    """
    if (k is None) == (nu is None):
        raise ValueError("pass exactly one of k or nu")
    _validate_sampling(radius, n_samples, "radius")
    P, Q, rho = _disk_samples(radius, n_samples, n_angles)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Fv = np.asarray(Ft.Ftilde(P, Q), dtype=float)
    scale = max(1.0, float(np.max(np.abs(Fv))))
    if k is not None:
        if not k > 0:
            raise ValueError(f"k must be positive, got {k!r}")
        g = Fv + k * (P * P + Q * Q)
        idx = np.unravel_index(int(np.argmin(g)), g.shape)
        tol = _EQUALITY_RTOL * scale
        passed = bool(g[idx] >= -tol)
        condition, parameter, value = "global_anisotropic", "k", float(k)
    else:
        if not nu > 0:
            raise ValueError(f"nu must be positive, got {nu!r}")
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            gp, gq = Ft.grad(P, Q)
        udot = P * gp + Q * gq
        g = udot - 2.0 * (1.0 + 2.0 * nu) * Fv
        idx = np.unravel_index(int(np.argmax(g)), g.shape)
        tol = _EQUALITY_RTOL * max(scale, float(np.max(np.abs(udot))))
        passed = bool(g[idx] <= tol)
        condition, parameter, value = "blowup_anisotropic", "nu", float(nu)
    return ConditionReport(
        condition=condition,
        parameter=parameter,
        value=value,
        passed=passed,
        worst=float(g[idx]),
        worst_at=float(np.hypot(P[idx], Q[idx])),
        sample_range=(float(rho[0]), float(rho[-1])),
        n_samples=n_samples * n_angles,
        tolerance=tol,
    )


ISOTROPIC_BUILTINS = {"powerlaw": powerlaw, "linear_plus": linear_plus, "quadratic": quadratic}
ANISOTROPIC_BUILTINS = {"isotropic_reduction": from_isotropic, "orthotropic": orthotropic}
