"""
``nonlocal-shear`` command-line entry point.

Exit codes: 0 success, 1 error, 3 run halted by the blow-up detector.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

from nonlocal_shear.errors import ObserverError, ScenarioError, StrictModeError
from nonlocal_shear.runner import EXIT_BLOWUP, EXIT_ERROR, EXIT_OK, execute
from nonlocal_shear.scenario import apply_overrides, builtin_names, load_scenario, scenario_from_dict
from nonlocal_shear.validation import SUITES, run_suite

log = logging.getLogger("nonlocal_shear")

_EXPECTED_ERRORS = (ScenarioError, StrictModeError, ObserverError, ValueError, OSError)


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def _default_output(name: str) -> Path:
    return Path("runs") / name


def _with_strict(overrides, strict: bool):
    overrides = list(overrides or ())
    if strict:
        overrides.append("strict=true")
    return overrides


def _print_run(result) -> None:
    rep = result.report
    out = rep["outcome"]
    print(f"scenario   {rep['scenario']}")
    print(f"status     {out['status']}" + (f" ({out['reason']})" if out["reason"] else ""))
    print(f"t          {out['t']:.6g} after {out['steps']} steps (dt {out['dt_final']:.4g})")
    print(f"E(0)       {rep['E0']:.6g}")
    print(f"E drift    {rep['energy_drift']:.3g}")
    lev = rep["levine"]
    if lev["t1"] is not None:
        print(f"t1 bound   {lev['t1']:.6g} (nu {lev['nu']:g}, b {lev['b']:.6g}, t0 {lev['t0']:.6g})")
    if rep["detector_time"] is not None:
        print(f"t* halt    {rep['detector_time']:.6g}")
    for row in rep["conditions"]:
        verdict = "pass" if row["passed"] else "FAIL"
        print(f"check      {row['condition']}: {verdict} (worst {row['worst']:.3g})")
    if result.output_dir is not None:
        print(f"output     {result.output_dir}")


def cmd_run(scenario_path, overrides=(), output_dir=None, strict: bool = False, quiet: bool = False) -> int:
    try:
        sc = load_scenario(scenario_path, _with_strict(overrides, strict))
        out = Path(output_dir) if output_dir is not None else _default_output(sc.name)
        result = execute(sc, out)
    except _EXPECTED_ERRORS as exc:
        _err(str(exc))
        return EXIT_ERROR
    if not quiet:
        _print_run(result)
    if result.exit_code == EXIT_ERROR:
        _err(f"run halted: {result.outcome.message}")
    return result.exit_code


# ---------------------------------------------------------------------------
# Sweeps


def _read_sweep_spec(path) -> dict:
    path = str(path)
    if path.startswith("builtin:"):
        name = path.split(":", 1)[1]
        res = resources.files("nonlocal_shear").joinpath("sweeps", f"{name}.json")
        if not res.is_file():
            raise ScenarioError(f"no built-in sweep named {name!r}")
        return json.loads(res.read_text())
    p = Path(path)
    if not p.is_file():
        raise ScenarioError(f"sweep spec {path!r} does not exist")
    spec = json.loads(p.read_text())
    scen = spec.get("scenario")
    if isinstance(scen, str) and not scen.startswith("builtin:") and not Path(scen).is_absolute():
        spec["scenario"] = str((p.parent / scen).resolve())
    return spec


def _parse_vary(items) -> dict:
    params = {}
    for item in items or ():
        if "=" not in item:
            raise ScenarioError(f"--vary {item!r} is not of the form path=[v1, v2, ...]")
        key, raw = item.split("=", 1)
        try:
            values = json.loads(raw)
        except json.JSONDecodeError:
            values = [v.strip() for v in raw.split(",")]
        if not isinstance(values, list) or not values:
            raise ScenarioError(f"--vary {key}: expected a non-empty JSON list")
        params[key.strip()] = values
    return params


def sweep_points(parameters: dict) -> list[dict]:
    """Cartesian product of the parameter lists, in the order given."""
    keys = list(parameters)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(parameters[k] for k in keys))]


def _sweep_worker(job):
    index, scenario_path, overrides, point, out_dir = job
    row = {"run": f"run_{index:03d}", **point}
    try:
        sc = load_scenario(scenario_path, list(overrides) + [(k, v) for k, v in point.items()])
        result = execute(sc, out_dir)
        rep = result.report
        row.update(
            status=rep["outcome"]["status"],
            reason=rep["outcome"]["reason"] or "",
            exit_code=result.exit_code,
            t_end=rep["outcome"]["t"],
            t_star=rep["detector_time"],
            t1=rep["levine"]["t1"],
            E0=rep["E0"],
            energy_drift=rep["energy_drift"],
            error="",
        )
    except Exception as exc:  # recorded per run; the sweep continues
        row.update(status="error", reason=type(exc).__name__, exit_code=EXIT_ERROR, error=str(exc))
    return row


SUMMARY_TAIL = ("status", "reason", "exit_code", "t_end", "t_star", "t1", "E0", "energy_drift", "error")


def cmd_sweep(scenario_path, sweep_spec: dict, overrides=(), output_dir=None, jobs: int = 1, strict: bool = False) -> int:
    """Run the Cartesian product in ``sweep_spec['parameters']``; one subdirectory per run.

    Exit code is the most severe per-run code: 1 if any run failed, else 3 if
    any run halted on blow-up, else 0.
    """
    try:
        scenario_path = scenario_path or sweep_spec.get("scenario")
        if scenario_path is None:
            raise ScenarioError("no scenario given (positional argument or 'scenario' in the sweep spec)")
        parameters = sweep_spec.get("parameters") or {}
        if not parameters:
            raise ScenarioError("sweep has no parameters")
        overrides = _with_strict(overrides, strict)
        base = load_scenario(scenario_path, overrides)
        points = sweep_points(parameters)
        bad = []
        for p in points:
            try:
                load_scenario(scenario_path, overrides + list(p.items()))
            except ScenarioError as exc:
                bad.append(f"{p}: {exc}")
        if bad:
            raise ScenarioError(bad)
    except _EXPECTED_ERRORS as exc:
        _err(str(exc))
        return EXIT_ERROR

    root = Path(output_dir) if output_dir is not None else _default_output(f"{base.name}_sweep")
    root.mkdir(parents=True, exist_ok=True)
    jobs_list = [(i, str(scenario_path), overrides, p, str(root / f"run_{i:03d}")) for i, p in enumerate(points)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_worker, jobs_list))
    else:
        rows = [_sweep_worker(j) for j in jobs_list]

    columns = ["run", *parameters, *SUMMARY_TAIL]
    with open(root / "summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})
    (root / "sweep.json").write_text(
        json.dumps({"scenario": str(scenario_path), "overrides": overrides, "parameters": parameters}, indent=2) + "\n"
    )

    for row in rows:
        params = ", ".join(f"{k}={row[k]}" for k in parameters)
        extra = f" t*={row['t_star']:.4g}" if isinstance(row.get("t_star"), float) else ""
        print(f"{row['run']}  {params}  {row['status']} {row['reason']}{extra}")
    print(f"summary    {root / 'summary.csv'}")
    codes = {row["exit_code"] for row in rows}
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_BLOWUP if EXIT_BLOWUP in codes else EXIT_OK


# ---------------------------------------------------------------------------
# Validation and reports


def _table(rows) -> str:
    lines = []
    for r in rows:
        verdict = "PASS" if r["passed"] else "FAIL"
        lines.append(f"{verdict}  {r['check']:<34} value {r['value']:<12.4g} tol {r['tolerance']:.4g}")
    return "\n".join(lines)


def cmd_validate(what: str, output_dir=None) -> int:
    if what not in SUITES:
        _err(f"unknown validation suite {what!r}; choose from {', '.join(SUITES)}")
        return EXIT_ERROR
    rows = run_suite(what)
    print(_table(rows))
    out = Path(output_dir) if output_dir is not None else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    columns = sorted({k for r in rows for k in r}, key=lambda k: (k not in ("check", "value", "tolerance", "passed"), k))
    path = out / f"validate_{what}.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n", restval="")
        writer.writeheader()
        writer.writerows(rows)
    failures = [r["check"] for r in rows if not r["passed"]]
    if failures:
        _err("failed: " + ", ".join(failures))
        return EXIT_ERROR
    return EXIT_OK


def cmd_report(path) -> int:
    p = Path(path)
    if p.is_dir() and (p / "summary.csv").is_file():
        with open(p / "summary.csv", newline="") as fh:
            for row in csv.DictReader(fh):
                print("  ".join(f"{k}={v}" for k, v in row.items() if v != ""))
        return EXIT_OK
    report_path = p / "report.json" if p.is_dir() else p
    if not report_path.is_file():
        _err(f"no report.json or summary.csv under {path!r}")
        return EXIT_ERROR
    rep = json.loads(report_path.read_text())
    out = rep["outcome"]
    print(f"scenario   {rep['scenario']}")
    print(f"status     {out['status']}" + (f" ({out['reason']})" if out["reason"] else ""))
    print(f"t          {out['t']:.6g} after {out['steps']} steps")
    print(f"E(0)       {rep['E0']:.6g}   drift {rep['energy_drift']}")
    lev = rep["levine"]
    print(f"levine     source {lev['source']}, t1 {lev['t1']}")
    print(f"t*         {rep['detector_time']}")
    for row in rep["conditions"]:
        print(f"check      {row['condition']}: {'pass' if row['passed'] else 'FAIL'}")
    for msg in rep["boundary"].get("truncation_warnings", []):
        print(f"warning    {msg}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nonlocal-shear", description="Nonlocal anti-plane shear wave solver.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log integrator events")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario", help="scenario JSON file or builtin:NAME")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE")
    p.add_argument("--strict", action="store_true", help="turn warnings into errors")
    p.add_argument("--output-dir", help="output directory (default runs/<name>)")

    p = sub.add_parser("sweep", help="run a Cartesian parameter sweep")
    p.add_argument("scenario", nargs="?", help="scenario JSON file or builtin:NAME")
    p.add_argument("--spec", help="sweep spec JSON file or builtin:NAME")
    p.add_argument("--vary", action="append", default=[], metavar="PATH=[V1,V2,...]")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="PATH=VALUE")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true")
    p.add_argument("--output-dir")

    p = sub.add_parser("validate", help="run a fixed validation suite")
    p.add_argument("what", choices=SUITES)
    p.add_argument("--output-dir", help="directory for the CSV table (default .)")

    p = sub.add_parser("report", help="summarize a run or sweep directory")
    p.add_argument("path")

    sub.add_parser("list", help="list built-in scenarios")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return cmd_run(args.scenario, args.overrides, args.output_dir, args.strict)
    if args.command == "sweep":
        try:
            spec = _read_sweep_spec(args.spec) if args.spec else {}
            params = dict(spec.get("parameters") or {})
            params.update(_parse_vary(args.vary))
            spec["parameters"] = params
        except (ScenarioError, json.JSONDecodeError) as exc:
            _err(str(exc))
            return EXIT_ERROR
        if args.jobs < 1:
            _err("--jobs must be >= 1")
            return EXIT_ERROR
        return cmd_sweep(args.scenario, spec, args.overrides, args.output_dir, args.jobs, args.strict)
    if args.command == "validate":
        return cmd_validate(args.what, args.output_dir)
    if args.command == "report":
        return cmd_report(args.path)
    if args.command == "list":
        print("\n".join(builtin_names()))
        return EXIT_OK
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
