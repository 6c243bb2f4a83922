"""Scenario configuration, run orchestration and result files.

Usage::

    haptosim simulate --config scenario.json [--out DIR] [--workers N] [--seed-check]
    haptosim verify-family --config scenario.json [--out DIR]
    haptosim hypotheses --config scenario.json

Exit codes: 0 ok, 2 configuration error, 3 hypothesis gate, 4 run aborted.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

import numpy as np

from . import regularize
from .diagnostics import energy_slope_check, write_series
from .io import fmt, write_rows
from .model import (
    Absorption,
    Coefficient,
    Constant,
    HypothesisReport,
    InitialData,
    ModelError,
    PowerLaw,
    ProductOfPowerLaws,
    SpatialGrid,
    Tabulated,
    validate_hypotheses,
)
from .solver import Problem, SolverError, SolverParams, run

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_HYPOTHESIS, EXIT_ABORT = 0, 2, 3, 4
SUMMARY_COLUMNS = ("eps", "final_dev_L1", "final_w_inf", "max_ln_du", "energy_violations", "wall_time")
THEOREMS = ("global_existence", "stabilization", "log_boundedness")


class ConfigError(ValueError):
    """Schema violation; the message starts with the offending field path."""


class HypothesisGateError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# expressions
# ---------------------------------------------------------------------------


def _scalar(node: Any, path: str) -> float:
    if isinstance(node, bool):
        raise ConfigError(f"{path}: expected a number")
    if isinstance(node, (int, float)):
        return float(node)
    if isinstance(node, dict) and set(node) == {"pi"}:
        return float(_scalar(node["pi"], path + ".pi")) * math.pi
    raise ConfigError(f"{path}: expected a number or {{'pi': k}}")


def compile_expr(node: Any, path: str = "expr") -> Callable[[np.ndarray], np.ndarray]:
    """Compile the JSON expression subset into a vectorised function of ``x``.

    Supported nodes: a number, ``{"pi": k}``, ``{"x": 1}``, ``{"abs_pow": [c, p]}``
    for ``|x - c|**p``, ``{"cos": {"a": a, "b": b}}`` for ``cos(a x + b)``,
    ``{"sum": [...]}`` and ``{"prod": [...]}``.
    """
    if isinstance(node, (int, float)) and not isinstance(node, bool):
        c = float(node)
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if not isinstance(node, dict) or len(node) != 1:
        raise ConfigError(f"{path}: expected a number or a single-key expression object")
    (key, arg), = node.items()
    if key == "pi":
        c = _scalar(node, path)
        return lambda x: np.full_like(np.asarray(x, dtype=float), c)
    if key == "x":
        return lambda x: np.asarray(x, dtype=float).copy()
    if key == "abs_pow":
        if not isinstance(arg, list) or len(arg) != 2:
            raise ConfigError(f"{path}.abs_pow: expected [centre, exponent]")
        c, p = _scalar(arg[0], path + ".abs_pow[0]"), _scalar(arg[1], path + ".abs_pow[1]")
        if p < 0:
            raise ConfigError(f"{path}.abs_pow[1]: exponent must be nonnegative")
        return lambda x: np.abs(np.asarray(x, dtype=float) - c) ** p
    if key == "cos":
        if not isinstance(arg, dict) or not set(arg) <= {"a", "b"}:
            raise ConfigError(f"{path}.cos: expected {{'a': ..., 'b': ...}}")
        a = _scalar(arg.get("a", 1.0), path + ".cos.a")
        b = _scalar(arg.get("b", 0.0), path + ".cos.b")
        return lambda x: np.cos(a * np.asarray(x, dtype=float) + b)
    if key in ("sum", "prod"):
        if not isinstance(arg, list) or not arg:
            raise ConfigError(f"{path}.{key}: expected a nonempty list")
        parts = [compile_expr(p, f"{path}.{key}[{i}]") for i, p in enumerate(arg)]
        if key == "sum":
            return lambda x: sum(f(x) for f in parts)

        def _prod(x):
            out = parts[0](x)
            for f in parts[1:]:
                out = out * f(x)
            return out

        return _prod
    raise ConfigError(f"{path}: unknown expression node {key!r}")


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilyConfig:
    j: int = 1
    j_max: int = 1
    eps: Optional[float] = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    snapshot_times: tuple = ()
    delta0: float = 0.05


@dataclass(frozen=True)
class ModeConfig:
    kind: str = "single"
    values: tuple = ()


@dataclass
class Scenario:
    config: dict
    left: float
    right: float
    n_cells: int
    coefficient: Coefficient
    absorption: Absorption
    u0_fn: Callable
    w0_fn: Callable
    family: FamilyConfig
    solver: SolverParams
    outputs: OutputConfig
    mode: ModeConfig
    require: tuple = ()
    report: Optional[HypothesisReport] = None
    warnings: list = field(default_factory=list)

    def grid(self, n_cells: Optional[int] = None) -> SpatialGrid:
        n = n_cells or self.n_cells
        return SpatialGrid(self.left, self.right, n, tuple(self.coefficient.zeros(self.left, self.right)))

    def initial(self, n_cells: Optional[int] = None) -> InitialData:
        return InitialData.from_functions(self.grid(n_cells), self.u0_fn, self.w0_fn)

    @property
    def flags(self) -> dict:
        return dict(self.report.flags) if self.report else {}


def _get(cfg: dict, key: str, path: str, kind, default=None, required=False):
    if key not in cfg:
        if required:
            raise ConfigError(f"{path}.{key}: missing")
        return default
    val = cfg[key]
    if kind is float:
        return _scalar(val, f"{path}.{key}")
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigError(f"{path}.{key}: expected an integer")
        return val
    if not isinstance(val, kind):
        raise ConfigError(f"{path}.{key}: expected {getattr(kind, '__name__', kind)}")
    return val


def _coefficient(cfg: Any, left: float, right: float) -> Coefficient:
    path = "coefficient"
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: expected an object")
    kind = _get(cfg, "kind", path, str, required=True)
    try:
        if kind == "constant":
            return Constant(_get(cfg, "c", path, float, 1.0))
        if kind == "power_law":
            x0 = _get(cfg, "x0", path, float, 0.0)
            theta = _get(cfg, "theta", path, float, required=True)
            scale = _get(cfg, "scale", path, float, 1.0)
            if theta >= 1.0:
                # kept constructible so the hypothesis gate, not the schema, rejects it
                return PowerLaw.pathological(x0, theta, scale)
            return PowerLaw(x0, theta, scale)
        if kind == "product":
            factors = _get(cfg, "factors", path, list, required=True)
            return ProductOfPowerLaws(tuple(tuple(f) for f in factors), _get(cfg, "scale", path, float, 1.0))
        if kind == "tabulated":
            samples = _get(cfg, "samples", path, list, required=True)
            return Tabulated(left, right, tuple(float(s) for s in samples))
    except (ModelError, TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    raise ConfigError(f"{path}.kind: unknown coefficient kind {kind!r}")


def parse_scenario(cfg: dict) -> Scenario:
    """Validate a configuration dictionary (no hypothesis checks)."""
    if not isinstance(cfg, dict):
        raise ConfigError("config: expected a JSON object")
    dom = _get(cfg, "domain", "config", dict, {"left": 0.0, "right": 1.0})
    left = _get(dom, "left", "domain", float, 0.0)
    right = _get(dom, "right", "domain", float, 1.0)
    if not right > left:
        raise ConfigError("domain: right must exceed left")
    grid_cfg = _get(cfg, "grid", "config", dict, {})
    n_cells = _get(grid_cfg, "n_cells", "grid", int, 100)
    coef = _coefficient(cfg.get("coefficient", {"kind": "constant", "c": 1.0}), left, right)

    ab_cfg = _get(cfg, "absorption", "config", dict, {"kind": "linear"})
    try:
        absorption = Absorption(_get(ab_cfg, "kind", "absorption", str, "linear"),
                                _get(ab_cfg, "c", "absorption", float, 0.0))
    except ModelError as exc:
        raise ConfigError(f"absorption: {exc}") from exc

    ini = _get(cfg, "initial", "config", dict, {})
    u0_fn = compile_expr(ini.get("u0", 1.0), "initial.u0")
    w0_fn = compile_expr(ini.get("w0", 0.0), "initial.w0")

    fam = _get(cfg, "family", "config", dict, {})
    j = _get(fam, "j", "family", int, 1)
    j_max = _get(fam, "j_max", "family", int, j)
    eps = _get(fam, "eps", "family", float, None)
    if j < 1 or j_max < 1:
        raise ConfigError("family.j: indices start at 1")

    sol = _get(cfg, "solver", "config", dict, {})
    try:
        params = SolverParams(
            t_end=_get(sol, "t_end", "solver", float, 1.0),
            dt_max=_get(sol, "dt_max", "solver", float, 1e-2),
            cfl_safety=_get(sol, "cfl_safety", "solver", float, 0.9),
            sample_interval=_get(sol, "sample_interval", "solver", float, 0.1),
            tol_newton=_get(sol, "tol_newton", "solver", float, 1e-12),
            steady_tol=_get(sol, "steady_tol", "solver", float, None),
        )
    except ValueError as exc:
        raise ConfigError(f"solver: {exc}") from exc

    out = _get(cfg, "outputs", "config", dict, {})
    snaps = tuple(_scalar(t, f"outputs.snapshot_times[{i}]")
                  for i, t in enumerate(_get(out, "snapshot_times", "outputs", list, [])))
    outputs = OutputConfig(
        directory=_get(out, "directory", "outputs", str, "out"),
        snapshot_times=snaps,
        delta0=_get(out, "delta0", "outputs", float, 0.05),
    )
    if not 0.0 < outputs.delta0 <= right - left:
        raise ConfigError("outputs.delta0: must lie in (0, |domain|]")

    mode_cfg = _get(cfg, "mode", "config", dict, {"kind": "single"})
    mkind = _get(mode_cfg, "kind", "mode", str, "single")
    if mkind == "single":
        mode = ModeConfig("single", (j,))
    elif mkind == "eps_sweep":
        js = _get(mode_cfg, "j", "mode", list, required=True)
        if not js or not all(isinstance(v, int) and v >= 1 for v in js):
            raise ConfigError("mode.j: expected a nonempty list of positive integers")
        mode = ModeConfig("eps_sweep", tuple(js))
        j_max = max(j_max, max(js))
    elif mkind == "grid_study":
        ns = _get(mode_cfg, "n", "mode", list, required=True)
        if not ns or not all(isinstance(v, int) and v >= 8 for v in ns):
            raise ConfigError("mode.n: expected a nonempty list of integers >= 8")
        mode = ModeConfig("grid_study", tuple(ns))
    else:
        raise ConfigError(f"mode.kind: unknown mode {mkind!r}")
    if j > j_max:
        raise ConfigError(f"family.j: {j} exceeds family.j_max={j_max}")

    require = tuple(_get(cfg, "require", "config", list, []))
    for r in require:
        if r not in THEOREMS:
            raise ConfigError(f"require: unknown theorem flag {r!r}; expected one of {THEOREMS}")

    try:
        scen = Scenario(cfg, left, right, n_cells, coef, absorption, u0_fn, w0_fn,
                        FamilyConfig(j, j_max, eps), params, outputs, mode, require)
        scen.initial()
    except ModelError as exc:
        raise ConfigError(f"grid/initial: {exc}") from exc
    return scen


def load_scenario(path: str | os.PathLike, check_hypotheses: bool = True) -> Scenario:
    """Read, validate and hypothesis-check a JSON scenario."""
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON ({exc})") from exc
    scen = parse_scenario(cfg)
    if check_hypotheses:
        apply_hypotheses(scen)
    return scen


def apply_hypotheses(scen: Scenario) -> HypothesisReport:
    grid = scen.grid()
    report = validate_hypotheses(scen.coefficient, scen.initial(), grid, scen.absorption)
    scen.report = report
    failed = report.failed
    for name in failed:
        msg = f"hypothesis {name} does not hold"
        scen.warnings.append(msg)
        logger.warning(msg)
    blocked = [t for t in scen.require if not report.flags.get(t, False)]
    if blocked:
        raise HypothesisGateError(
            f"scenario requires {', '.join(blocked)} but hypotheses fail: {', '.join(sorted(failed)) or 'none'}"
        )
    return report


# ---------------------------------------------------------------------------
# execution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunSpec:
    label: str
    j: int
    n_cells: int
    directory: str


@dataclass
class RunResult:
    label: str
    eps: float
    ok: bool
    message: str = ""
    final_dev_L1: float = math.nan
    final_w_inf: float = math.nan
    max_ln_du: float = math.nan
    energy_violations: int = -1
    wall_time: float = 0.0


def _snapshot_name(t: float) -> str:
    return "snap_t%.6f.csv" % t


def write_snapshot(directory: Path, state, d: np.ndarray) -> None:
    x = state.u.grid.centers
    write_rows(directory / _snapshot_name(state.t), ("x", "u", "w", "d_eps"),
               zip(x.tolist(), state.u.values.tolist(), state.w.values.tolist(), d.tolist()))


def build_family_for(scen: Scenario, n_cells: Optional[int] = None) -> regularize.RegularizationFamily:
    return regularize.build_family(scen.coefficient, scen.initial(n_cells), scen.family.j_max)


def _execute_member(scen: Scenario, spec: RunSpec) -> RunResult:
    t0 = time.perf_counter()
    out = Path(spec.directory)
    out.mkdir(parents=True, exist_ok=True)
    init = scen.initial(spec.n_cells)
    grid = init.grid
    eps = math.nan
    try:
        fam = build_family_for(scen, spec.n_cells)
        fs = fam.slice(spec.j, scen.family.eps)
        eps = fs.eps
        problem = Problem(grid, fs, scen.absorption, init.u0.values,
                          float(np.max(init.w0.values)) + 1.0, scen.outputs.delta0)
        traj = run(problem, scen.solver, capture_times=scen.outputs.snapshot_times)
    except (SolverError, regularize.RegularizationError) as exc:
        logger.error("%s: %s", spec.label, exc)
        return RunResult(spec.label, eps, False, str(exc), wall_time=time.perf_counter() - t0)
    write_series(out / "series.csv", traj.records)
    for t in sorted(traj.captures):
        write_snapshot(out, traj.captures[t], fs.d)
    recs = traj.records
    violations = (energy_slope_check(recs, fs.eps, scen.absorption, problem.M).violations
                  if len(recs) >= 2 else 0)
    return RunResult(
        spec.label, fs.eps, True, "",
        recs[-1].dev_L1, recs[-1].w_inf, max(r.ln_du_max for r in recs), violations,
        time.perf_counter() - t0,
    )


def _member_task(args):
    cfg, spec = args
    return _execute_member(parse_scenario(cfg), spec)


def plan_runs(scen: Scenario, out_dir: str) -> list[RunSpec]:
    if scen.mode.kind == "single":
        return [RunSpec("single", scen.family.j, scen.n_cells, out_dir)]
    if scen.mode.kind == "eps_sweep":
        return [RunSpec(f"j{j}", j, scen.n_cells, os.path.join(out_dir, f"run_j{j}")) for j in scen.mode.values]
    return [RunSpec(f"n{n}", scen.family.j, n, os.path.join(out_dir, f"run_n{n}")) for n in scen.mode.values]


def _check_writable(out_dir: str) -> None:
    try:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=out_dir, prefix=".probe"):
            pass
    except OSError as exc:
        raise ConfigError(f"outputs.directory: {out_dir} is not writable ({exc})") from exc


def _ledger_dict(fam: regularize.RegularizationFamily) -> dict:
    ledger = fam.ledger or regularize.verify_family(fam, strict=False)
    return {"epsilons": [fmt(e) for e in fam.epsilons],
            "rows": [{k: (fmt(v) if isinstance(v, float) else v) for k, v in r.items()} for r in ledger.rows]}


def execute(scen: Scenario, out_dir: Optional[str] = None, workers: int = 1) -> int:
    """Run the scenario's mode and write every result file; returns an exit status."""
    out_dir = out_dir or scen.outputs.directory
    _check_writable(out_dir)
    specs = plan_runs(scen, out_dir)
    if workers > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_member_task, [(scen.config, s) for s in specs]))
    else:
        results = [_execute_member(scen, s) for s in specs]

    fam = build_family_for(scen)
    manifest = {
        "config": scen.config,
        "hypotheses": scen.report.to_dict() if scen.report else None,
        "warnings": scen.warnings,
        "family_ledger": _ledger_dict(fam),
        "runs": [{"label": r.label, "ok": r.ok, "message": r.message, "eps": fmt(r.eps)} for r in results],
    }
    with open(Path(out_dir) / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=_json_default)
    if scen.mode.kind != "single":
        write_rows(Path(out_dir) / "summary.csv", SUMMARY_COLUMNS,
                   ([r.eps, r.final_dev_L1, r.final_w_inf, r.max_ln_du, r.energy_violations, r.wall_time]
                    for r in results))
    return EXIT_OK if all(r.ok for r in results) else EXIT_ABORT


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _series_files(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("series.csv"))}


def seed_check(scen: Scenario, out_dir: str, workers: int = 1) -> bool:
    """Run a second time into a scratch directory and compare every ``series.csv`` byte for byte."""
    with tempfile.TemporaryDirectory() as tmp:
        status = execute(scen, tmp, workers)
        if status != EXIT_OK:
            return False
        return _series_files(Path(tmp)) == _series_files(Path(out_dir))


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    scen = load_scenario(args.config)
    out_dir = args.out or scen.outputs.directory
    status = execute(scen, out_dir, args.workers)
    if status != EXIT_OK:
        return status
    if args.seed_check:
        same = seed_check(scen, out_dir, args.workers)
        print(f"seed check: {'identical' if same else 'MISMATCH'}")
        if not same:
            return EXIT_ABORT
    print(f"results written to {out_dir}")
    return EXIT_OK


def _cmd_verify_family(args) -> int:
    scen = load_scenario(args.config)
    out_dir = args.out or scen.outputs.directory
    _check_writable(out_dir)
    fam = build_family_for(scen)
    ledger = regularize.verify_family(fam, strict=True)
    regularize.write_family_csv(fam, Path(out_dir) / "family_fields.csv", Path(out_dir) / "family_ledger.csv")
    print(",".join(regularize.PropertyLedger.COLUMNS))
    for r in ledger.rows:
        print(",".join([str(r["j"])] + [fmt(r[c]) for c in regularize.PropertyLedger.COLUMNS[1:]]))
    print(f"max e45_4 = {fmt(ledger.max_e45_4)}, max e45_5 = {fmt(ledger.max_e45_5)}")
    return EXIT_OK


def _cmd_hypotheses(args) -> int:
    scen = load_scenario(args.config)
    print(json.dumps(scen.report.to_dict(), indent=2, sort_keys=True, default=_json_default))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="haptosim", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", default=None, help="output directory (overrides the config)")
    sim.add_argument("--workers", type=int, default=1, help="parallel runs for sweeps")
    sim.add_argument("--seed-check", action="store_true", help="rerun and compare series.csv bytes")
    sim.set_defaults(func=_cmd_simulate)

    ver = sub.add_parser("verify-family", help="build the regularisation family and print its ledger")
    ver.add_argument("--config", required=True)
    ver.add_argument("--out", default=None)
    ver.set_defaults(func=_cmd_verify_family)

    hyp = sub.add_parser("hypotheses", help="print the hypothesis report")
    hyp.add_argument("--config", required=True)
    hyp.set_defaults(func=_cmd_hypotheses)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HypothesisGateError as exc:
        print(f"hypothesis gate: {exc}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except regularize.FamilyVerificationError as exc:
        print(f"family verification failed: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (SolverError, regularize.RegularizationError) as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
