"""
Execute a :class:`~nonlocal_shear.scenario.Scenario` and write its output directory.

Layout::

    manifest.json          effective parameters (reloadable as a scenario)
    diagnostics.csv        one DiagnosticsRecord per recorded step
    snapshots/NNNNNN.raw   w and v at selected steps, with .json sidecars
    report.json            outcome, detector time, Levine bound, condition verdicts
"""

from __future__ import annotations

import json
import math
import platform
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from nonlocal_shear import __version__, nonlinearity
from nonlocal_shear.diagnostics import (
    DiagnosticsRecorder,
    LevineConfig,
    energy,
    energy_drift,
    levine_H,
    levine_bound,
)
from nonlocal_shear.errors import ScenarioError
from nonlocal_shear.grid import write_snapshot_group
from nonlocal_shear.integrator import (
    FIELD_MAGNITUDE_EXCEEDED,
    SUP_GRADIENT_EXCEEDED,
    RunOutcome,
    run,
)
from nonlocal_shear.operators import omega_max
from nonlocal_shear.scenario import (
    OrthotropicSpec,
    Scenario,
    build_context,
    build_control,
    initial_state_with_telemetry,
    build_isotropic,
)

# Records with ||grad w||_inf above this multiple of its initial value are
# excluded from the "resolved" drift figure.
RESOLVED_FACTOR = 10.0

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BLOWUP = 3


def exit_code_for(outcome: RunOutcome) -> int:
    if outcome.completed:
        return EXIT_OK
    if outcome.reason in (SUP_GRADIENT_EXCEEDED, FIELD_MAGNITUDE_EXCEEDED):
        return EXIT_BLOWUP
    return EXIT_ERROR


@dataclass
class RunResult:
    scenario: Scenario
    outcome: RunOutcome
    levine: LevineConfig
    report: dict
    records: list = field(default_factory=list)
    output_dir: Path | None = None

    @property
    def exit_code(self) -> int:
        return exit_code_for(self.outcome)


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def resolved_records(records, factor: float = RESOLVED_FACTOR) -> list:
    """Leading records with ``sup_grad <= factor * sup_grad(0)``."""
    if not records:
        return []
    limit = factor * records[0].sup_grad
    out = []
    for r in records:
        if r.sup_grad > limit:
            break
        out.append(r)
    return out


def _levine_setup(sc: Scenario, ctx, state, e0: float) -> tuple[LevineConfig, str]:
    if sc.levine is not None:
        spec = sc.levine
        if spec.b is None and not e0 < 0:
            raise ScenarioError(f"levine: E(0) = {e0:.6g} is not negative, so b must be given explicitly")
        try:
            cfg = LevineConfig.for_initial_state(ctx, state, spec.nu, spec.b, spec.t0)
        except ValueError as err:
            raise ScenarioError(f"levine: {err}") from None
        return cfg, "explicit"
    if e0 < 0:
        nu = sc.checks.nu if sc.checks.nu is not None else 0.5
        return LevineConfig.for_initial_state(ctx, state, nu), "auto"
    return LevineConfig.monitor_only(), "monitor"


def condition_reports(sc: Scenario, levine: LevineConfig | None = None) -> list[dict]:
    """Sampled energy-condition verdicts requested by ``sc.checks``.

    The blow-up check falls back to the Levine ``nu`` when none is requested
    and the run has a blow-up configuration.
    """
    checks = sc.checks
    nu = checks.nu
    if nu is None and levine is not None and levine.b > 0:
        nu = levine.nu
    rows = []
    spec = sc.energy
    anisotropic = isinstance(spec, OrthotropicSpec) or spec.anisotropic
    if anisotropic:
        from nonlocal_shear.scenario import build_energy

        Ft = build_energy(sc)
        radius = math.sqrt(checks.u_max)
        if checks.k is not None:
            rows.append(nonlinearity.check_conditions_anisotropic(Ft, k=checks.k, radius=radius, n_samples=checks.n_samples))
        if nu is not None:
            rows.append(nonlinearity.check_conditions_anisotropic(Ft, nu=nu, radius=radius, n_samples=checks.n_samples))
    else:
        F = build_isotropic(spec)
        if checks.k is not None:
            rows.append(nonlinearity.check_global_condition(F, checks.k, checks.u_max, checks.n_samples))
        if nu is not None:
            rows.append(nonlinearity.check_blowup_condition(F, nu, checks.u_max, checks.n_samples))
    return [r.as_row() for r in rows]


def effective_scenario(sc: Scenario, dt: float, levine: LevineConfig, mode: str) -> dict:
    """Scenario dict with auto-chosen values written in; reloading it reproduces the run."""
    data = sc.model_dump(mode="json")
    data["control"]["dt"] = dt
    if mode != "monitor":
        data["levine"] = levine.as_dict()
    return data


class _SnapshotWriter:
    def __init__(self, directory: Path, every: int):
        self.directory = directory
        self.every = every
        self.written = []

    def __call__(self, state, sup_grad):
        if state.step_index % self.every == 0:
            self.write(state)

    def write(self, state):
        stem = self.directory / f"{state.step_index:06d}"
        write_snapshot_group(stem, {"w": state.w, "v": state.v}, state.t)
        self.written.append(state.step_index)


def _json_safe(obj):
    """Replace non-finite floats (JSON has no inf/nan) with None."""
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _dump_json(path: Path, data) -> None:
    path.write_text(json.dumps(_json_safe(data), indent=2, allow_nan=False) + "\n")


def execute(sc: Scenario, output_dir=None) -> RunResult:
    """Run ``sc``; when ``output_dir`` is given, write the full output layout there."""
    ctx = build_context(sc)
    state, boundary = initial_state_with_telemetry(sc, ctx.grid)
    control = build_control(sc, ctx)
    e0 = energy(ctx, state)
    levine, mode = _levine_setup(sc, ctx, state, e0)

    out = None
    observers = []
    csv_path = None
    snapshots = None
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "diagnostics.csv"
        manifest = {
            "package_version": __version__,
            "scenario": effective_scenario(sc, control.dt, levine, mode),
            "effective": {
                "dt": control.dt,
                "dt_source": "scenario" if sc.control.dt is not None else "auto",
                "omega_max": omega_max(ctx),
                "levine": levine.as_dict(),
                "levine_source": mode,
                "E0": e0,
                "kernel": {
                    "name": ctx.kernel.name,
                    "r": _finite_or_none(ctx.kernel.r),
                    "C": ctx.kernel.C,
                    "params": ctx.kernel.params,
                },
                "energy": ctx.energy.describe(),
                "grid": ctx.grid.to_dict(),
                "n_floored_modes": int(ctx.floored.sum()),
            },
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
        _dump_json(out / "manifest.json", manifest)
        if sc.output.snapshot_every > 0:
            snapshots = _SnapshotWriter(out / "snapshots", sc.output.snapshot_every)
            observers.append(snapshots)

    recorder = DiagnosticsRecorder(ctx, levine, sc.output.diagnostics_every, sc.output.sobolev_s, csv_path)
    observers.insert(0, recorder)
    try:
        outcome = run(ctx, state, control, observers)
    except BaseException:
        recorder.close()
        raise
    recorder.finalize(outcome.final_state)
    if snapshots is not None and snapshots.written[-1:] != [outcome.final_state.step_index]:
        snapshots.write(outcome.final_state)

    H0, Hp0, _ = levine_H(ctx, state, levine)
    admissible = mode != "monitor" and e0 < 0 and Hp0 > 0
    t1 = levine_bound(levine, H0, Hp0) if admissible else None
    records = recorder.records
    resolved = resolved_records(records)
    report = {
        "scenario": sc.name,
        "outcome": outcome.summary(),
        "exit_code": exit_code_for(outcome),
        "detector_time": outcome.t if outcome.blew_up else None,
        "levine": dict(levine.as_dict(), source=mode, H0=H0, Hprime0=Hp0, admissible=admissible, t1=t1),
        "E0": e0,
        "energy_drift": energy_drift(records) if len(records) >= 2 else 0.0,
        "energy_drift_resolved": energy_drift(resolved) if len(resolved) >= 2 else 0.0,
        "max_skipped_mode_energy_fraction": max((r.skipped_mode_energy_fraction for r in records), default=0.0),
        "conditions": condition_reports(sc, levine),
        "boundary": boundary,
        "n_records": len(records),
    }
    report = _json_safe(report)
    if out is not None:
        _dump_json(out / "report.json", report)
    return RunResult(sc, outcome, levine, report, records, out)
