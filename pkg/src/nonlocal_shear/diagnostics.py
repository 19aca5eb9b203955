"""
Scalar functionals evaluated along a run.

- Energy ``E = 1/2 ||R w_t||^2 + integral F(|grad w|^2)``, conserved by the
  continuous dynamics.
- Levine functional ``H(t) = ||R w||^2 + b (t + t0)^2`` with

      H'  = 2 <R w_t, R w> + 2 b (t + t0)
      H'' = 2 ||R w_t||^2 + 2 <R^2 w_tt, w> + 2 b

  where ``<R^2 w_tt, w> = -integral 2 |grad w|^2 F'(|grad w|^2)`` (isotropic)
  or ``-integral grad w . grad Ft(grad w)`` (anisotropic). This pairing is
  evaluated pointwise, so no unbounded multiplier touches ``w_tt``.
- The concavity residual ``H'' H - (1 + nu) H'^2``, which stays nonnegative
  when the blow-up hypotheses hold and ``b <= -2 E(0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, astuple, dataclass, fields
from typing import Iterable, Sequence

import numpy as np

from nonlocal_shear.grid import gradient_arrays, l2_norm, sobolev_norm, sup_norm_gradient
from nonlocal_shear.integrator import SimState
from nonlocal_shear.operators import FloorTelemetry, OperatorContext, r_inner, r_norm_squared


def energy(ctx: OperatorContext, state: SimState, telemetry: FloorTelemetry | None = None) -> float:
    """``1/2 ||R v||^2 + integral F``; the potential term is a grid quadrature."""
    kinetic = 0.5 * r_norm_squared(ctx, state.v.fourier, telemetry)
    return kinetic + potential_energy(ctx, state)


def potential_energy(ctx: OperatorContext, state: SimState) -> float:
    wx, wy = gradient_arrays(ctx.grid, state.w.fourier)
    return ctx.grid.cell_area * float(np.sum(ctx.energy.density(wx, wy)))


def stress_pairing(ctx: OperatorContext, state: SimState) -> float:
    """``<R^2 w_tt, w>`` via the pointwise identity (no time derivative needed)."""
    wx, wy = gradient_arrays(ctx.grid, state.w.fourier)
    return -ctx.grid.cell_area * float(np.sum(ctx.energy.pairing_density(wx, wy)))


@dataclass(frozen=True)
class LevineConfig:
    """Constants ``nu``, ``b``, ``t0`` of the Levine functional, fixed at ``t = 0``."""

    nu: float
    b: float
    t0: float

    def __post_init__(self):
        for name in ("nu", "t0"):
            value = getattr(self, name)
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"{name} must be positive and finite, got {value!r}")
        if not (self.b >= 0 and math.isfinite(self.b)):
            raise ValueError(f"b must be nonnegative and finite, got {self.b!r}")

    @classmethod
    def monitor_only(cls, nu: float = 0.5) -> "LevineConfig":
        """``b = 0, t0 = 1``: records ``||R w||^2`` and its derivatives with no blow-up claim."""
        return cls(nu=float(nu), b=0.0, t0=1.0)

    @classmethod
    def for_initial_state(
        cls,
        ctx: OperatorContext,
        state: SimState,
        nu: float,
        b: float | None = None,
        t0: float | None = None,
    ) -> "LevineConfig":
        """Choose admissible constants for ``state`` (taken as ``t = 0``).

        When ``E(0) < 0`` the rule is ``b <= -2 E(0)`` (default ``b = -2 E(0)``).
        ``t0`` defaults to ``max(1, (1 + |<R phi, R psi>|) / b)`` and is raised
        to that value if the given one leaves ``H'(0) <= 0``.
        """
        e0 = energy(ctx, state)
        if b is None:
            if not e0 < 0:
                raise ValueError(f"E(0) = {e0!r} is not negative; pass b explicitly")
            b = -2.0 * e0
        elif e0 < 0 and b > -2.0 * e0:
            raise ValueError(f"b = {b!r} violates b <= -2 E(0) = {-2.0 * e0!r}")
        if not b > 0:
            raise ValueError(f"b must be positive, got {b!r}")
        cross = r_inner(ctx, state.v.fourier, state.w.fourier)
        t_auto = max(1.0, (1.0 + abs(cross)) / b)
        if t0 is None or 2.0 * cross + 2.0 * b * t0 <= 0.0:
            t0 = t_auto
        return cls(nu=float(nu), b=float(b), t0=float(t0))

    def as_dict(self) -> dict:
        return asdict(self)


def levine_H(
    ctx: OperatorContext, state: SimState, cfg: LevineConfig, telemetry: FloorTelemetry | None = None
) -> tuple[float, float, float]:
    """``(H, H', H'')`` at ``state``."""
    w_hat = state.w.fourier
    v_hat = state.v.fourier
    tau = state.t + cfg.t0
    rw2 = r_norm_squared(ctx, w_hat, telemetry)
    rv2 = r_norm_squared(ctx, v_hat, telemetry)
    rvw = r_inner(ctx, v_hat, w_hat)
    H = rw2 + cfg.b * tau * tau
    Hp = 2.0 * rvw + 2.0 * cfg.b * tau
    Hpp = 2.0 * rv2 + 2.0 * stress_pairing(ctx, state) + 2.0 * cfg.b
    return H, Hp, Hpp


def concavity_residual(H: float, Hp: float, Hpp: float, nu: float) -> float:
    return Hpp * H - (1.0 + nu) * Hp * Hp


def levine_bound(cfg: LevineConfig | float, H0: float, Hprime0: float) -> float:
    """Upper bound ``H(0) / (nu H'(0))`` on the blow-up time of ``H``."""
    nu = cfg.nu if isinstance(cfg, LevineConfig) else float(cfg)
    if not (H0 > 0 and Hprime0 > 0 and nu > 0):
        raise ValueError(f"levine_bound needs positive H0, H'(0) and nu; got {H0!r}, {Hprime0!r}, {nu!r}")
    return H0 / (nu * Hprime0)


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    E: float
    H: float
    Hprime: float
    Hdoubleprime: float
    concavity_residual: float
    sup_grad: float
    l2_w: float
    sobolev_w: float
    sobolev_v: float
    skipped_mode_energy_fraction: float

    @property
    def normalized_residual(self) -> float:
        return self.concavity_residual / (self.H * self.H)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in astuple(self))


COLUMNS = tuple(f.name for f in fields(DiagnosticsRecord))


def compute_record(
    ctx: OperatorContext,
    state: SimState,
    cfg: LevineConfig,
    sobolev_s: float = 1.0,
    sup_grad: float | None = None,
) -> DiagnosticsRecord:
    telemetry = FloorTelemetry()
    E = energy(ctx, state, telemetry)
    H, Hp, Hpp = levine_H(ctx, state, cfg, telemetry)
    if sup_grad is None:
        sup_grad = sup_norm_gradient(state.w)
    return DiagnosticsRecord(
        t=float(state.t),
        E=E,
        H=H,
        Hprime=Hp,
        Hdoubleprime=Hpp,
        concavity_residual=concavity_residual(H, Hp, Hpp, cfg.nu),
        sup_grad=float(sup_grad),
        l2_w=l2_norm(state.w),
        sobolev_w=sobolev_norm(state.w, sobolev_s),
        sobolev_v=sobolev_norm(state.v, sobolev_s),
        skipped_mode_energy_fraction=telemetry.max_energy_fraction,
    )


def energy_drift(records: Sequence[DiagnosticsRecord]) -> float:
    """``max |E(t) - E(0)| / max(1, |E(0)|)``."""
    if len(records) < 2:
        raise ValueError("energy_drift needs at least two records")
    e0 = records[0].E
    return max(abs(r.E - e0) for r in records) / max(1.0, abs(e0))


def format_value(x: float) -> str:
    return format(x, ".17g")


class DiagnosticsRecorder:
    """Run observer computing a :class:`DiagnosticsRecord` every ``every`` steps.

    Records are kept in memory and, when ``path`` is given, streamed to a CSV
    with the columns of :data:`COLUMNS`.
    """

    def __init__(self, ctx: OperatorContext, cfg: LevineConfig, every: int = 1, sobolev_s: float = 1.0, path=None):
        if every < 1:
            raise ValueError("diagnostics cadence must be >= 1")
        self.ctx = ctx
        self.cfg = cfg
        self.every = every
        self.sobolev_s = sobolev_s
        self.records: list[DiagnosticsRecord] = []
        self._last_step = None
        self._fh = None
        self._writer = None
        if path is not None:
            self._fh = open(path, "w", newline="")
            self._writer = csv.writer(self._fh, lineterminator="\n")
            self._writer.writerow(COLUMNS)

    def __call__(self, state: SimState, sup_grad: float) -> None:
        if state.step_index % self.every == 0:
            self._record(state, sup_grad)

    def _record(self, state, sup_grad):
        rec = compute_record(self.ctx, state, self.cfg, self.sobolev_s, sup_grad)
        self.records.append(rec)
        self._last_step = state.step_index
        if self._writer is not None:
            self._writer.writerow([format_value(v) for v in astuple(rec)])

    def finalize(self, state: SimState) -> None:
        """Record the final state if the cadence skipped it, then close the CSV."""
        if self._last_step != state.step_index and state.is_finite():
            self._record(state, sup_norm_gradient(state.w))
        self.close()

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None
            self._writer = None


def read_diagnostics_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return {name: data[:, i] for i, name in enumerate(header)}


def centered_difference(t: Iterable[float], values: Iterable[float]) -> tuple[np.ndarray, np.ndarray]:
    """Centered first differences at interior points of a uniformly spaced series."""
    t = np.asarray(list(t), dtype=float)
    values = np.asarray(list(values), dtype=float)
    return t[1:-1], (values[2:] - values[:-2]) / (t[2:] - t[:-2])
