"""
Fixed-step time integration of ``w_t = v, v_t = Kw``.

Two schemes are provided: classical RK4 and kick-drift-kick leapfrog. A run
halts when ``||grad w||_inf`` exceeds its threshold (the blow-up indicator),
when the field magnitude bound is exceeded, when non-finite values appear, or
when the step budget runs out. Blow-up is detected, never resolved.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from nonlocal_shear.errors import BlowupOrInstability, NonFiniteError, ObserverError
from nonlocal_shear.grid import SpectralField, fft2, sup_norm_gradient
from nonlocal_shear.operators import OperatorContext, apply_K_hat, omega_max

log = logging.getLogger(__name__)

SCHEMES = ("rk4", "leapfrog")

COMPLETED = "completed"
SUP_GRADIENT_EXCEEDED = "sup_gradient_exceeded"
FIELD_MAGNITUDE_EXCEEDED = "field_magnitude_exceeded"
NON_FINITE = "non_finite"
MAX_STEPS = "max_steps"


@dataclass(frozen=True)
class SimState:
    """Displacement ``w``, velocity ``v = w_t`` and time."""

    w: SpectralField
    v: SpectralField
    t: float = 0.0
    step_index: int = 0

    def __post_init__(self):
        if self.w.grid != self.v.grid:
            raise ValueError("w and v must share one grid")
        if self.t < 0:
            raise ValueError(f"time must be nonnegative, got {self.t!r}")

    @property
    def grid(self):
        return self.w.grid

    def is_finite(self) -> bool:
        return self.w.is_finite() and self.v.is_finite()


@dataclass(frozen=True)
class StepControl:
    """Time-stepping parameters.

    The sup-gradient halt threshold is ``sup_grad_max`` when given, otherwise
    ``sup_grad_factor`` times the initial ``||grad w||_inf``.
    """

    dt: float
    t_end: float
    scheme: str = "rk4"
    max_steps: int = 10_000_000
    sup_grad_factor: float = 1e6
    sup_grad_max: float | None = None
    field_max: float = 1e100
    halve_on_nonfinite: bool = False
    max_halvings: int = 30

    def __post_init__(self):
        problems = []
        if not (self.dt > 0 and math.isfinite(self.dt)):
            problems.append(f"dt must be positive, got {self.dt!r}")
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            problems.append(f"t_end must be positive, got {self.t_end!r}")
        elif self.dt > self.t_end:
            problems.append(f"dt={self.dt} exceeds t_end={self.t_end}")
        if self.scheme not in SCHEMES:
            problems.append(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.max_steps < 1:
            problems.append("max_steps must be >= 1")
        if not self.sup_grad_factor > 0:
            problems.append("sup_grad_factor must be positive")
        if self.sup_grad_max is not None and not self.sup_grad_max > 0:
            problems.append("sup_grad_max must be positive")
        if not self.field_max > 0:
            problems.append("field_max must be positive")
        if problems:
            raise ValueError("; ".join(problems))

    def threshold(self, sup_grad_initial: float) -> float:
        if self.sup_grad_max is not None:
            return float(self.sup_grad_max)
        if sup_grad_initial == 0.0:
            return math.inf
        return self.sup_grad_factor * sup_grad_initial


@dataclass
class RunOutcome:
    """How a run ended. ``reason`` is None for completed runs."""

    status: str
    reason: str | None
    t: float
    steps: int
    final_state: SimState
    sup_grad_initial: float
    sup_grad_final: float
    threshold: float
    dt_final: float
    halvings: int = 0
    message: str = ""

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED

    @property
    def blew_up(self) -> bool:
        return self.reason in (SUP_GRADIENT_EXCEEDED, FIELD_MAGNITUDE_EXCEEDED)

    def summary(self) -> dict:
        return {
            "status": self.status,
            "reason": self.reason,
            "t": self.t,
            "steps": self.steps,
            "sup_grad_initial": self.sup_grad_initial,
            "sup_grad_final": self.sup_grad_final,
            "threshold": self.threshold,
            "dt_final": self.dt_final,
            "halvings": self.halvings,
            "message": self.message,
        }


def default_dt(ctx: OperatorContext, safety: float = 0.2) -> float:
    """``safety / omega_max`` with ``omega_max = max |xi| sqrt(beta_hat)`` over the grid."""
    return safety / omega_max(ctx)


def _accel(ctx: OperatorContext, w: np.ndarray) -> np.ndarray:
    return apply_K_hat(ctx, fft2(w))


def _finish(ctx, state, w, v, dt):
    if not (np.all(np.isfinite(w)) and np.all(np.isfinite(v))):
        raise BlowupOrInstability("step produced non-finite values", t=state.t, step_index=state.step_index)
    grid = ctx.grid
    return SimState(
        SpectralField.from_real(grid, w),
        SpectralField.from_real(grid, v),
        t=state.t + dt,
        step_index=state.step_index + 1,
    )


def step_rk4(ctx: OperatorContext, state: SimState, dt: float) -> SimState:
    """One classical fourth-order Runge-Kutta step."""
    w0 = state.w.real
    v0 = state.v.real
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            a1 = _accel(ctx, w0)
            w2 = w0 + 0.5 * dt * v0
            v2 = v0 + 0.5 * dt * a1
            a2 = _accel(ctx, w2)
            w3 = w0 + 0.5 * dt * v2
            v3 = v0 + 0.5 * dt * a2
            a3 = _accel(ctx, w3)
            w4 = w0 + dt * v3
            v4 = v0 + dt * a3
            a4 = _accel(ctx, w4)
            w = w0 + (dt / 6.0) * (v0 + 2.0 * v2 + 2.0 * v3 + v4)
            v = v0 + (dt / 6.0) * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    except NonFiniteError as exc:
        raise BlowupOrInstability(str(exc), t=state.t, step_index=state.step_index) from exc
    return _finish(ctx, state, w, v, dt)


def step_leapfrog(ctx: OperatorContext, state: SimState, dt: float) -> SimState:
    """One kick-drift-kick leapfrog step (second order, time-symmetric)."""
    w0 = state.w.real
    v0 = state.v.real
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            v_half = v0 + 0.5 * dt * _accel(ctx, w0)
            w = w0 + dt * v_half
            v = v_half + 0.5 * dt * _accel(ctx, w)
    except NonFiniteError as exc:
        raise BlowupOrInstability(str(exc), t=state.t, step_index=state.step_index) from exc
    return _finish(ctx, state, w, v, dt)


STEPPERS = {"rk4": step_rk4, "leapfrog": step_leapfrog}

Observer = Callable[[SimState, float], None]


def _notify(observers: Sequence[Observer], state: SimState, sup_grad: float) -> None:
    for obs in observers:
        try:
            obs(state, sup_grad)
        except Exception as exc:
            raise ObserverError(
                f"observer {obs!r} failed at t={state.t!r} (step {state.step_index}): {exc}"
            ) from exc


def run(
    ctx: OperatorContext,
    initial: SimState,
    control: StepControl,
    observers: Sequence[Observer] = (),
) -> RunOutcome:
    """Integrate from ``initial`` to ``control.t_end`` or until a halt condition fires.

    Observers are called as ``observer(state, sup_grad)`` for the initial
    state and after every accepted step.
    """
    if initial.grid != ctx.grid:
        raise ValueError("initial state grid does not match the operator context")
    stepper = STEPPERS[control.scheme]
    state = initial
    sup0 = sup_norm_gradient(state.w)
    threshold = control.threshold(sup0)
    dt = control.dt
    halvings = 0
    sup = sup0
    _notify(observers, state, sup)

    def outcome(status, reason, message=""):
        return RunOutcome(
            status=status,
            reason=reason,
            t=state.t,
            steps=state.step_index,
            final_state=state,
            sup_grad_initial=sup0,
            sup_grad_final=sup,
            threshold=threshold,
            dt_final=dt,
            halvings=halvings,
            message=message,
        )

    t_end = control.t_end
    while state.t < t_end:
        if state.step_index - initial.step_index >= control.max_steps:
            return outcome("halted", MAX_STEPS, f"step budget {control.max_steps} exhausted")
        h = dt
        snap = False
        if state.t + h >= t_end - 1e-9 * dt:
            h = t_end - state.t
            snap = True
        try:
            new = stepper(ctx, state, h)
            new_sup = sup_norm_gradient(new.w)
            if not math.isfinite(new_sup):
                raise BlowupOrInstability("non-finite gradient", t=state.t, step_index=state.step_index)
        except BlowupOrInstability as exc:
            if control.halve_on_nonfinite and halvings < control.max_halvings:
                dt *= 0.5
                halvings += 1
                log.info("non-finite step at t=%.6g; halving dt to %.3g", state.t, dt)
                continue
            return outcome("halted", NON_FINITE, str(exc))
        if snap:
            new = replace(new, t=t_end)
        state = new
        sup = new_sup
        _notify(observers, state, sup)
        if sup > threshold:
            return outcome("halted", SUP_GRADIENT_EXCEEDED, f"||grad w||_inf = {sup:.6g} > {threshold:.6g}")
        if state.w.max_abs() > control.field_max:
            return outcome("halted", FIELD_MAGNITUDE_EXCEEDED, f"max |w| exceeds {control.field_max:g}")
    return outcome(COMPLETED, None)
