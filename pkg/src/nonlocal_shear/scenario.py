"""
Declarative run description loaded from a JSON file.

Unknown keys are rejected everywhere. All problems found while loading are
reported together in one :class:`~nonlocal_shear.errors.ScenarioError`.
"""

from __future__ import annotations

import json
import math
import warnings
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from nonlocal_shear import kernels, nonlinearity
from nonlocal_shear.errors import ScenarioError, StrictModeError
from nonlocal_shear.grid import Grid2D, SpectralField, read_snapshot
from nonlocal_shear.integrator import SimState, StepControl, default_dt
from nonlocal_shear.operators import OperatorContext

SCHEMA_VERSION = 1
BOUNDARY_DECAY_LIMIT = 1e-12


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridSpec(_Strict):
    nx: int = Field(default=64, ge=4)
    ny: int = Field(default=64, ge=4)
    lx: float = Field(default=40.0, gt=0)
    ly: float = Field(default=40.0, gt=0)

    @field_validator("nx", "ny")
    @classmethod
    def _even(cls, n: int) -> int:
        if n % 2:
            raise ValueError(f"grid sizes must be even, got {n}")
        return n


class GaussianKernelSpec(_Strict):
    name: Literal["gaussian"]
    effective_r: float = 10.0


class BesselKernelSpec(_Strict):
    name: Literal["bessel_k0"]


class BiHelmholtzKernelSpec(_Strict):
    name: Literal["bi_helmholtz"]
    c1: float
    c2: float


class DiracKernelSpec(_Strict):
    name: Literal["dirac"]


class TabulatedKernelSpec(_Strict):
    name: Literal["tabulated"]
    path: str
    r: float
    C: float


KernelSpec = Annotated[
    Union[GaussianKernelSpec, BesselKernelSpec, BiHelmholtzKernelSpec, DiracKernelSpec, TabulatedKernelSpec],
    Field(discriminator="name"),
]


class PowerLawSpec(_Strict):
    name: Literal["powerlaw"]
    a: float
    q: float
    anisotropic: bool = False


class LinearPlusSpec(_Strict):
    """``F(u) = u/2 + G(u)`` with a power-law ``G``."""

    name: Literal["linear_plus"]
    G: PowerLawSpec
    anisotropic: bool = False


class QuadraticSpec(_Strict):
    name: Literal["quadratic"]
    anisotropic: bool = False


class OrthotropicSpec(_Strict):
    name: Literal["orthotropic"]
    cx: float
    cy: float
    a: float = 0.0
    q: float = 2.0


EnergySpec = Annotated[
    Union[PowerLawSpec, LinearPlusSpec, QuadraticSpec, OrthotropicSpec],
    Field(discriminator="name"),
]


class GaussianBumpData(_Strict):
    kind: Literal["gaussian_bump"]
    amplitude: float
    sigma: float = Field(gt=0)
    center: tuple[float, float] = (0.0, 0.0)


class ModeData(_Strict):
    """``amplitude * cos(xi . x + phase)`` with ``xi`` given by integer mode numbers."""

    kind: Literal["mode"]
    index: tuple[int, int]
    amplitude: float
    phase: float = 0.0


class RingData(_Strict):
    kind: Literal["ring"]
    radius: float = Field(ge=0)
    width: float = Field(gt=0)
    amplitude: float


class FileData(_Strict):
    kind: Literal["file"]
    path: str
    field: Optional[str] = None


class ZeroData(_Strict):
    kind: Literal["zero"]


class ProportionalData(_Strict):
    kind: Literal["proportional"]
    factor: float


PhiSpec = Annotated[
    Union[GaussianBumpData, ModeData, RingData, FileData, ZeroData],
    Field(discriminator="kind"),
]
PsiSpec = Annotated[
    Union[GaussianBumpData, ModeData, RingData, FileData, ZeroData, ProportionalData],
    Field(discriminator="kind"),
]


class InitialSpec(_Strict):
    phi: PhiSpec
    psi: PsiSpec = ZeroData(kind="zero")


class ControlSpec(_Strict):
    t_end: float = Field(gt=0)
    dt: Optional[float] = Field(default=None, gt=0)
    dt_safety: float = Field(default=0.2, gt=0)
    scheme: Literal["rk4", "leapfrog"] = "rk4"
    max_steps: int = Field(default=10_000_000, ge=1)
    sup_grad_factor: float = Field(default=1e6, gt=0)
    sup_grad_max: Optional[float] = Field(default=None, gt=0)
    field_max: float = Field(default=1e100, gt=0)
    halve_on_nonfinite: bool = False


class LevineSpec(_Strict):
    nu: float = Field(default=0.5, gt=0)
    b: Optional[float] = Field(default=None, gt=0)
    t0: Optional[float] = Field(default=None, gt=0)


class ChecksSpec(_Strict):
    k: Optional[float] = Field(default=None, gt=0)
    nu: Optional[float] = Field(default=None, gt=0)
    u_max: float = Field(default=100.0, gt=0)
    n_samples: int = Field(default=400, ge=100)


class OutputSpec(_Strict):
    diagnostics_every: int = Field(default=1, ge=1)
    snapshot_every: int = Field(default=0, ge=0)
    sobolev_s: float = 1.0


class NumericsSpec(_Strict):
    dealias: bool = True
    epsilon_floor: float = Field(default=1e-280, gt=0, lt=1)
    floor_mode: Literal["skip", "cap"] = "skip"
    imag_tol: float = Field(default=1e-10, gt=0)


class Scenario(_Strict):
    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "scenario"
    grid: GridSpec = GridSpec()
    kernel: KernelSpec
    energy: EnergySpec
    initial: InitialSpec
    control: ControlSpec
    levine: Optional[LevineSpec] = None
    checks: ChecksSpec = ChecksSpec()
    output: OutputSpec = OutputSpec()
    numerics: NumericsSpec = NumericsSpec()
    strict: bool = False

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Loading


def _format_pydantic(err: ValidationError) -> list[str]:
    out = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"])
        if e["type"] == "extra_forbidden":
            out.append(f"unknown key {loc!r}")
        else:
            out.append(f"{loc}: {e['msg']}")
    return out


def _resolve_paths(data: dict, base: Path) -> None:
    """Make relative ``path`` entries (kernel table, file initial data) absolute."""

    def fix(node):
        if isinstance(node, dict) and isinstance(node.get("path"), str):
            p = Path(node["path"])
            if not p.is_absolute():
                node["path"] = str((base / p).resolve())

    if isinstance(data.get("kernel"), dict):
        fix(data["kernel"])
    initial = data.get("initial")
    if isinstance(initial, dict):
        for key in ("phi", "psi"):
            fix(initial.get(key))


def scenario_from_dict(data: dict, base_dir=None) -> Scenario:
    data = json.loads(json.dumps(data))
    if base_dir is not None:
        _resolve_paths(data, Path(base_dir))
    try:
        scenario = Scenario.model_validate(data)
    except ValidationError as err:
        raise ScenarioError(_format_pydantic(err)) from None
    problems = semantic_problems(scenario)
    if problems:
        raise ScenarioError(problems)
    return scenario


def load_scenario(path, overrides=()) -> Scenario:
    """Parse, apply ``path=value`` overrides, and validate a scenario file.

    ``path`` may be ``builtin:NAME`` for a scenario shipped with the package.
    """
    text, base = _read_source(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: invalid JSON ({err})") from None
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object")
    data = apply_overrides(data, overrides)
    return scenario_from_dict(data, base_dir=base)


def _read_source(path):
    path = str(path)
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        res = resources.files("nonlocal_shear").joinpath("scenarios", f"{name}.json")
        if not res.is_file():
            raise ScenarioError(f"no built-in scenario named {name!r}; available: {', '.join(builtin_names())}")
        return res.read_text(), Path.cwd()
    p = Path(path)
    if not p.is_file():
        raise ScenarioError(f"scenario file {path!r} does not exist")
    return p.read_text(), p.parent


def builtin_names() -> list[str]:
    root = resources.files("nonlocal_shear").joinpath("scenarios")
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``dotted.path=value`` overrides; values are parsed as JSON when possible."""
    data = json.loads(json.dumps(data))
    for item in overrides:
        if isinstance(item, str):
            if "=" not in item:
                raise ScenarioError(f"override {item!r} is not of the form path=value")
            key, raw = item.split("=", 1)
            value = _parse_value(raw)
        else:
            key, value = item
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            child = node.get(part)
            if child is None:
                child = {}
                node[part] = child
            if not isinstance(child, dict):
                raise ScenarioError(f"override {key!r}: {part!r} is not an object")
            node = child
        node[parts[-1]] = value
    return data


def semantic_problems(sc: Scenario) -> list[str]:
    """Checks that need the domain constructors (grid parity, kernel parameters, ...)."""
    problems = []
    grid = None
    try:
        grid = build_grid(sc)
    except ValueError as err:
        problems.append(f"grid: {err}")
    if grid is not None:
        try:
            build_kernel(sc, grid)
        except (ValueError, OSError) as err:
            problems.append(f"kernel: {err}")
    try:
        build_energy(sc)
    except ValueError as err:
        problems.append(f"energy: {err}")
    if sc.control.dt is not None and sc.control.dt > sc.control.t_end:
        problems.append(f"control.dt={sc.control.dt} exceeds control.t_end={sc.control.t_end}")
    for key in ("phi", "psi"):
        spec = getattr(sc.initial, key)
        if isinstance(spec, FileData) and not Path(spec.path).is_file():
            problems.append(f"initial.{key}.path: file {spec.path!r} does not exist")
    return problems


# ---------------------------------------------------------------------------
# Construction


def build_grid(sc: Scenario) -> Grid2D:
    g = sc.grid
    return Grid2D(g.nx, g.ny, g.lx, g.ly)


def build_kernel(sc: Scenario, grid: Grid2D) -> kernels.KernelSymbol:
    spec = sc.kernel
    if isinstance(spec, GaussianKernelSpec):
        return kernels.gaussian(spec.effective_r)
    if isinstance(spec, BesselKernelSpec):
        return kernels.bessel_k0()
    if isinstance(spec, BiHelmholtzKernelSpec):
        return kernels.bi_helmholtz(spec.c1, spec.c2)
    if isinstance(spec, DiracKernelSpec):
        return kernels.dirac()
    k = kernels.tabulated(spec.path, grid, spec.r, spec.C)
    report = kernels.validate_decay(k, grid)
    if not report.passed:
        raise ValueError(
            f"tabulated kernel fails the decay check (min {report.min_symbol:.3g}, empirical C {report.empirical_C:.6g} > {spec.C})"
        )
    return k


def build_isotropic(spec) -> nonlinearity.IsotropicEnergy:
    if isinstance(spec, PowerLawSpec):
        return nonlinearity.powerlaw(spec.a, spec.q)
    if isinstance(spec, LinearPlusSpec):
        return nonlinearity.linear_plus(nonlinearity.powerlaw(spec.G.a, spec.G.q))
    if isinstance(spec, QuadraticSpec):
        return nonlinearity.quadratic()
    raise ValueError(f"{spec.name!r} is not an isotropic energy")


def build_energy(sc: Scenario):
    spec = sc.energy
    if isinstance(spec, OrthotropicSpec):
        return nonlinearity.orthotropic(spec.cx, spec.cy, spec.a, spec.q)
    iso = build_isotropic(spec)
    return nonlinearity.from_isotropic(iso) if spec.anisotropic else iso


def build_context(sc: Scenario, grid: Grid2D | None = None) -> OperatorContext:
    grid = build_grid(sc) if grid is None else grid
    n = sc.numerics
    return OperatorContext(
        grid,
        build_kernel(sc, grid),
        build_energy(sc),
        epsilon_floor=n.epsilon_floor,
        floor_mode=n.floor_mode,
        dealias=n.dealias,
        imag_tol=n.imag_tol,
        strict=sc.strict,
    )


def effective_dt(sc: Scenario, ctx: OperatorContext) -> float:
    dt = sc.control.dt if sc.control.dt is not None else default_dt(ctx, sc.control.dt_safety)
    return min(dt, sc.control.t_end)


def build_control(sc: Scenario, ctx: OperatorContext) -> StepControl:
    c = sc.control
    return StepControl(
        dt=effective_dt(sc, ctx),
        t_end=c.t_end,
        scheme=c.scheme,
        max_steps=c.max_steps,
        sup_grad_factor=c.sup_grad_factor,
        sup_grad_max=c.sup_grad_max,
        field_max=c.field_max,
        halve_on_nonfinite=c.halve_on_nonfinite,
    )


def realize(spec, grid: Grid2D) -> np.ndarray:
    """Sample one initial-data description on the grid (not ``proportional``)."""
    x, y = grid.mesh
    if isinstance(spec, ZeroData):
        return np.zeros(grid.shape)
    if isinstance(spec, GaussianBumpData):
        cx, cy = spec.center
        r2 = (x - cx) ** 2 + (y - cy) ** 2
        return spec.amplitude * np.exp(-r2 / (2.0 * spec.sigma**2))
    if isinstance(spec, ModeData):
        j, k = spec.index
        xi1 = 2.0 * math.pi * j / grid.lx
        xi2 = 2.0 * math.pi * k / grid.ly
        return spec.amplitude * np.cos(xi1 * x + xi2 * y + spec.phase)
    if isinstance(spec, RingData):
        r = np.hypot(x, y)
        return spec.amplitude * np.exp(-((r - spec.radius) ** 2) / (2.0 * spec.width**2))
    if isinstance(spec, FileData):
        meta, fields = read_snapshot(spec.path)
        name = spec.field or next(iter(fields))
        if name not in fields:
            raise ScenarioError(f"{spec.path}: no field {name!r} (have {sorted(fields)})")
        f = fields[name]
        if f.grid != grid:
            raise ScenarioError(f"{spec.path}: grid {f.grid} does not match scenario grid {grid}")
        return f.real.copy()
    raise ScenarioError(f"unsupported initial data kind {spec.kind!r}")


def _amplitude(spec) -> float | None:
    return getattr(spec, "amplitude", None)


def build_initial_state(sc: Scenario, grid: Grid2D | None = None) -> SimState:
    """Realize ``phi`` and ``psi`` at ``t = 0``; see :func:`initial_state_with_telemetry`."""
    return initial_state_with_telemetry(sc, grid)[0]


def initial_state_with_telemetry(sc: Scenario, grid: Grid2D | None = None) -> tuple[SimState, dict]:
    """Realize ``phi`` and ``psi`` at ``t = 0`` and measure boundary decay.

    Returns the state and a telemetry dict with the outermost-ring amplitude of
    each field relative to its declared amplitude (or its peak, when none is declared).
    Too much mass on the ring is a warning, or :class:`StrictModeError` in strict mode.
    """
    grid = build_grid(sc) if grid is None else grid
    phi = realize(sc.initial.phi, grid)
    psi_spec = sc.initial.psi
    psi = psi_spec.factor * phi if isinstance(psi_spec, ProportionalData) else realize(psi_spec, grid)
    telemetry = {}
    problems = []
    for name, values, spec in (("phi", phi, sc.initial.phi), ("psi", psi, psi_spec)):
        peak = float(np.max(np.abs(values)))
        declared = _amplitude(spec)
        reference = abs(declared) if declared else peak
        if isinstance(spec, ProportionalData):
            reference = abs(spec.factor) * float(np.max(np.abs(phi)))
        ring = float(np.max(np.abs(values[grid.boundary_ring])))
        ratio = ring / reference if reference > 0 else 0.0
        telemetry[name] = {"boundary_max": ring, "relative": ratio}
        if ratio > BOUNDARY_DECAY_LIMIT:
            problems.append(
                f"initial {name} reaches {ratio:.3g} of its amplitude on the box boundary "
                f"(limit {BOUNDARY_DECAY_LIMIT:g}); the periodic box truncates the whole-plane data"
            )
    for msg in problems:
        if sc.strict:
            raise StrictModeError(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    telemetry["truncation_warnings"] = problems
    state = SimState(SpectralField.from_real(grid, phi), SpectralField.from_real(grid, psi), t=0.0)
    return state, telemetry
