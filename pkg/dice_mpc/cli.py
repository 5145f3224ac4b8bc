#!/usr/bin/env python3
"""
dice-mpc command line

Runs scenarios described by flat ``key = value`` files and writes CSV and
JSON artifacts:

    dice-mpc run --config dice_mpc/experiments/scc_by_rho.toml --jobs 3
    dice-mpc params --vintage 2016R
"""

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .config import LOG_FORMAT, load_system_config, parse_flat, reject_unknown, resolve_log_level
from .errors import ConfigError, DiceError, DomainError, ProblemError, SolverError
from .mpc import ClosedLoopRun, MpcConfig, run_mpc
from .nlp import ITERATION_COLUMNS, SolveResult, SolverOptions, SolverStatus, check_gradient, iteration_rows, solve
from .params import (ParameterSet, Vintage, derived_climate_inputs, digest, load_override_file,
                     load_parameter_set, serialize, validate)
from .scc import (SccPoint, SccSeries, cross_validate, pulse_experiment, scc_from_multipliers, scc_pulse)
from .transcription import OcpSpec, build_ocp1

logger = logging.getLogger("dice_mpc.cli")

MODES = ("open_loop", "mpc", "scc_table", "pulse", "feasibility_search")
SEARCH_PARAMETERS = ("T_max", "growth_bound")
PULSE_DISCOUNTS = ("flat", "marginal_utility")

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER = 3
EXIT_CONFIG = 4

TRAJECTORY_COLUMNS = ("step", "year", "T_AT", "T_LO", "M_AT", "M_UP", "M_LO", "K", "L", "A", "sigma",
                      "mu", "s", "Y", "Q", "E", "C", "I", "damages_factor", "scc")
SCC_COLUMNS = ("year", "scc", "method", "lambda_E", "lambda_C", "rho")


@dataclass
class ScenarioConfig:
    """One scenario; unset numeric options fall back to the parameter set."""

    name: str = "scenario"
    description: str = ""
    vintage: str = "DICE2016R"
    mode: str = "open_loop"
    N: Optional[int] = None
    N_sim: Optional[int] = None
    rho: Union[None, float, List[float]] = None
    T_max: Optional[float] = None
    rate_bound: Optional[float] = None
    growth_bound: Optional[float] = None
    fix_mu1: bool = False
    savings_tail_length: int = 0
    savings_tail_value: float = 0.2582
    pulse_year: Optional[int] = None
    pulse_size: float = 10.0
    pulse_discount: str = "flat"
    pulse_rate: float = 0.05
    pulse_tail_steps: int = 100
    pulse_reoptimize: bool = False
    scc_years: List[int] = field(default_factory=lambda: [2015, 2020, 2030])
    search_parameter: Optional[str] = None
    search_low: Optional[float] = None
    search_high: Optional[float] = None
    search_resolution: float = 0.01
    warm_start: bool = True
    compat_lambda_c: bool = False
    params_file: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    iteration_log: bool = False
    scaled_objective: bool = True

    @property
    def rho_values(self) -> List[Optional[float]]:
        if isinstance(self.rho, list):
            return list(self.rho)
        return [self.rho]


CONFIG_FIELDS: Tuple[str, ...] = tuple(f.name for f in dataclasses.fields(ScenarioConfig))

_STR_FIELDS = ("name", "description", "mode", "pulse_discount", "search_parameter", "params_file", "out")
_INT_FIELDS = ("N", "N_sim", "savings_tail_length", "pulse_year", "pulse_tail_steps", "seed")
_BOOL_FIELDS = ("fix_mu1", "pulse_reoptimize", "warm_start", "compat_lambda_c", "iteration_log",
                "scaled_objective")


def _as_number(key: str, value: Any, line: Optional[int]) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=key, line=line)
    return float(value)


def _as_int(key: str, value: Any, line: Optional[int]) -> int:
    number = _as_number(key, value, line)
    if number != int(number):
        raise ConfigError(f"expected an integer, got {value!r}", key=key, line=line)
    return int(number)


def _coerce(key: str, value: Any, line: Optional[int]) -> Any:
    if key == "vintage":
        try:
            return Vintage.parse(value).value
        except ConfigError as e:
            raise ConfigError(str(e).split(": ", 1)[-1], key=key, line=line)
    if key in _STR_FIELDS:
        if isinstance(value, (list, dict, bool)):
            raise ConfigError(f"expected a string, got {value!r}", key=key, line=line)
        return str(value)
    if key in _INT_FIELDS:
        return _as_int(key, value, line)
    if key in _BOOL_FIELDS:
        if not isinstance(value, bool):
            raise ConfigError(f"expected true or false, got {value!r}", key=key, line=line)
        return value
    if key == "rho":
        if isinstance(value, (list, tuple)):
            if not value:
                raise ConfigError("rho list is empty", key=key, line=line)
            return [_as_number(key, v, line) for v in value]
        return _as_number(key, value, line)
    if key == "scc_years":
        values = value if isinstance(value, (list, tuple)) else [value]
        return [_as_int(key, v, line) for v in values]
    return _as_number(key, value, line)


def _validate(cfg: ScenarioConfig, lines: Mapping[str, int]) -> None:
    def fail(key: str, message: str):
        raise ConfigError(message, key=key, line=lines.get(key))

    if cfg.mode not in MODES:
        fail("mode", f"unknown mode '{cfg.mode}' (expected one of {', '.join(MODES)})")
    for value in cfg.rho_values:
        if value is not None and not value > 0:
            fail("rho", "rho must be positive")
    if isinstance(cfg.rho, list) and cfg.mode != "scc_table":
        fail("rho", "a list of rho values needs mode = scc_table")
    if cfg.N is not None and cfg.N < 1:
        fail("N", "N must be at least 1")
    if cfg.N_sim is not None and cfg.N_sim < 1:
        fail("N_sim", "N_sim must be at least 1")
    if cfg.rate_bound is not None and cfg.rate_bound < 0:
        fail("rate_bound", "rate_bound must be nonnegative")
    for key in ("T_max", "growth_bound", "search_resolution", "pulse_rate"):
        value = getattr(cfg, key)
        if value is not None and not value > 0:
            fail(key, f"{key} must be positive")
    for key in ("rate_bound", "growth_bound"):
        if getattr(cfg, key) is not None and not cfg.fix_mu1:
            fail(key, f"{key} needs fix_mu1 = true")
    if cfg.savings_tail_length < 0:
        fail("savings_tail_length", "savings_tail_length must be nonnegative")
    if not 0.0 <= cfg.savings_tail_value < 1.0:
        fail("savings_tail_value", "savings_tail_value must lie in [0, 1)")

    if cfg.mode == "mpc" and cfg.N_sim is None:
        fail("N_sim", "mode = mpc needs N_sim")
    if cfg.mode == "pulse":
        if cfg.pulse_year is None:
            fail("pulse_year", "mode = pulse needs pulse_year")
        if cfg.pulse_size < 0:
            fail("pulse_size", "pulse_size must be nonnegative")
        if cfg.pulse_discount not in PULSE_DISCOUNTS:
            fail("pulse_discount", f"pulse_discount must be one of {', '.join(PULSE_DISCOUNTS)}")
        if cfg.pulse_tail_steps < 1:
            fail("pulse_tail_steps", "pulse_tail_steps must be at least 1")
    if cfg.mode == "feasibility_search":
        if cfg.search_parameter not in SEARCH_PARAMETERS:
            fail("search_parameter", f"search_parameter must be one of {', '.join(SEARCH_PARAMETERS)}")
        if cfg.search_low is None or cfg.search_high is None:
            fail("search_low", "mode = feasibility_search needs search_low and search_high")
        if not 0 < cfg.search_low < cfg.search_high:
            fail("search_low", "need 0 < search_low < search_high")
        if cfg.search_parameter == "growth_bound" and not cfg.fix_mu1:
            fail("fix_mu1", "a growth_bound search needs fix_mu1 = true")


def _system_defaults(system_config: Optional[Mapping[str, Any]]) -> Dict[str, Any]:
    if not system_config:
        return {}
    scc = system_config.get("scc") or {}
    search = system_config.get("search") or {}
    pairs = (("scc_years", scc.get("years")), ("pulse_size", scc.get("pulse_size")),
             ("pulse_rate", scc.get("pulse_rate")), ("pulse_tail_steps", scc.get("tail_steps")),
             ("search_resolution", search.get("resolution")))
    return {key: _coerce(key, value, None) for key, value in pairs if value is not None}


def parse_config(text: str, overrides: Optional[Mapping[str, Any]] = None,
                 system_config: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    """
    Parse a scenario file.

    Args:
        text: Flat ``key = value`` text
        overrides: Values from command-line flags; None entries are ignored
        system_config: Supplies SCC and search defaults below the file values

    Returns:
        Validated ScenarioConfig

    Raises:
        ConfigError: Naming the key and, for file entries, the line
    """
    entries = parse_flat(text)
    reject_unknown(entries, list(CONFIG_FIELDS))
    values: Dict[str, Any] = _system_defaults(system_config)
    lines: Dict[str, int] = {}
    for key, (value, line) in entries.items():
        values[key] = _coerce(key, value, line)
        lines[key] = line
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in CONFIG_FIELDS:
            raise ConfigError("unknown option", key=key)
        values[key] = _coerce(key, value, None)
        lines.pop(key, None)

    cfg = ScenarioConfig(**values)
    _validate(cfg, lines)
    return cfg


@dataclass
class RunManifest:
    name: str
    mode: str
    config: Dict[str, Any]
    params_digest: str
    version: str
    started: str
    finished: str = ""
    status: str = ""
    exit_code: int = EXIT_OK
    solver: Dict[str, Any] = field(default_factory=dict)
    solves: List[Dict[str, Any]] = field(default_factory=list)
    results: Dict[str, Any] = field(default_factory=dict)
    files: List[Dict[str, Any]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2) + "\n"


Table = Tuple[Sequence[str], List[Sequence[Any]]]


@dataclass
class ScenarioRun:
    manifest: RunManifest
    tables: Dict[str, Table] = field(default_factory=dict)


@dataclass
class _Outcome:
    tables: Dict[str, Table]
    results: List[SolveResult]
    summary: Dict[str, Any]
    exit_code: Optional[int] = None
    status: Optional[str] = None


# ---------------------------------------------------------------------------
# scenario modes
# ---------------------------------------------------------------------------

def _spec(cfg: ScenarioConfig, params: ParameterSet, rho: Optional[float] = None) -> OcpSpec:
    tail = (cfg.savings_tail_length, cfg.savings_tail_value) if cfg.savings_tail_length else None
    return OcpSpec(
        params=params,
        horizon=cfg.N if cfg.N is not None else params.N_default,
        fix_mu1=cfg.fix_mu1,
        T_max=cfg.T_max,
        rate_bound=cfg.rate_bound,
        growth_bound=cfg.growth_bound,
        savings_tail=tail,
        rho=rho if rho is not None else (cfg.rho if not isinstance(cfg.rho, list) else None),
        scaled_objective=cfg.scaled_objective,
    )


def _trajectory_table(table: Mapping[str, Sequence[float]], series: SccSeries) -> Table:
    by_step = {pt.step: pt.scc for pt in series.points}
    rows = []
    for k, step in enumerate(table["step"]):
        row: List[Any] = [int(step)]
        row += [float(table[name][k]) for name in TRAJECTORY_COLUMNS[1:-1]]
        row.append(by_step.get(int(step)))
        rows.append(row)
    return TRAJECTORY_COLUMNS, rows


def _scc_table(series: SccSeries) -> Table:
    rows = [[pt.year, pt.scc, pt.method, pt.lambda_E, pt.lambda_C, pt.rho] for pt in series.points]
    return SCC_COLUMNS, rows


def _multiplier_series(result: SolveResult) -> SccSeries:
    return scc_from_multipliers(result) if result.optimal else SccSeries()


def _run_open_loop(cfg, params, opts, system_config, jobs) -> _Outcome:
    problem = build_ocp1(_spec(cfg, params))
    result = solve(problem, opts)
    series = _multiplier_series(result)
    table = problem.trajectory(result.primal)
    summary: Dict[str, Any] = {"objective": result.objective, "peak_T_AT": float(max(table["T_AT"]))}
    if result.optimal:
        summary["gradient_check"] = check_gradient(problem, result.primal, seed=cfg.seed)
    return _Outcome(
        tables={"trajectory.csv": _trajectory_table(table, series), "scc.csv": _scc_table(series)},
        results=[result],
        summary=summary,
    )


def _run_mpc(cfg, params, opts, system_config, jobs) -> _Outcome:
    mcfg = MpcConfig(spec=_spec(cfg, params), N_sim=cfg.N_sim, warm_start=cfg.warm_start,
                     compat_lambda_c=cfg.compat_lambda_c, solver=opts)
    try:
        run = run_mpc(mcfg)
    except SolverError as e:
        run = e.partial if isinstance(e.partial, ClosedLoopRun) else ClosedLoopRun(params=params)
    series = scc_from_multipliers(run)
    tables = {"scc.csv": _scc_table(series)}
    summary: Dict[str, Any] = {"steps": run.steps}
    if run.steps:
        tables["trajectory.csv"] = _trajectory_table(run.trajectory(), series)
        summary["welfare"] = run.welfare
    if run.shift_gaps:
        summary["max_shift_gap"] = max(run.shift_gaps)
    return _Outcome(tables=tables, results=run.results, summary=summary)


def _solve_cell(spec: OcpSpec, opts: SolverOptions) -> Tuple[SolveResult, Dict[str, Any]]:
    problem = build_ocp1(spec)
    result = solve(problem, opts)
    return result, problem.trajectory(result.primal)


def _run_scc_table(cfg, params, opts, system_config, jobs) -> _Outcome:
    rhos = [r if r is not None else params.rho for r in cfg.rho_values]
    specs = [_spec(cfg, params, rho) for rho in rhos]
    if jobs > 1 and len(specs) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cells = list(pool.map(_solve_cell, specs, [opts] * len(specs)))
    else:
        cells = [_solve_cell(spec, opts) for spec in specs]

    table_series = SccSeries()
    summary: Dict[str, Any] = {}
    for rho, (result, _) in zip(rhos, cells):
        series = _multiplier_series(result)
        values = {}
        for year in cfg.scc_years:
            try:
                values[str(year)] = series.at_year(year)
            except KeyError:
                logger.warning(f"No SCC for {year} at rho={rho:g} ({result.status.value})")
                continue
            table_series.points.extend(pt for pt in series.points if abs(pt.year - year) < 1e-9)
        summary[f"rho={rho:g}"] = values
        logger.info(f"rho={rho:g}: " + ", ".join(f"SCC({y})={v:.2f}" for y, v in values.items()))

    first_result, first_table = cells[0]
    tables = {
        "scc.csv": _scc_table(table_series),
        "trajectory.csv": _trajectory_table(first_table, _multiplier_series(first_result)),
    }
    return _Outcome(tables=tables, results=[c[0] for c in cells], summary=summary)


def _run_pulse(cfg, params, opts, system_config, jobs) -> _Outcome:
    problem = build_ocp1(_spec(cfg, params))
    result = solve(problem, opts)
    mult = _multiplier_series(result)
    tables = {"trajectory.csv": _trajectory_table(problem.trajectory(result.primal), mult)}
    if not result.optimal:
        return _Outcome(tables=tables, results=[result], summary={})

    run = pulse_experiment(problem, result, cfg.pulse_year, cfg.pulse_size, cfg.pulse_discount,
                           cfg.pulse_rate, cfg.pulse_tail_steps)
    series = SccSeries([pt for pt in mult.points if pt.step == run.step])
    series.points.append(SccPoint(run.step, run.year, run.scc, f"pulse_{cfg.pulse_discount}", rho=problem.params.rho))
    summary: Dict[str, Any] = {
        "pulse_scc": run.scc,
        "max_relative_consumption_deviation": run.max_relative_deviation,
    }
    if cfg.pulse_reoptimize:
        value = scc_pulse(problem, result, cfg.pulse_year, cfg.pulse_size, reoptimize=True, opts=opts)
        series.points.append(SccPoint(run.step, run.year, value, "pulse_reoptimized", rho=series.points[-1].rho))
        summary["reoptimized_scc"] = value
    try:
        summary["multiplier_scc"] = mult.at_year(run.year)
        report = cross_validate(mult, {run.year: run.scc},
                                threshold=system_config["scc"].get("deviation_threshold", 0.10))
        summary["relative_deviation"] = report.rows[0].relative_deviation
    except KeyError:
        logger.warning(f"No multiplier SCC at the pulse year {run.year:g}")

    steps = range(1, run.C_base.size + 1)
    pulse_rows = [[k, params.year(k), run.C_base[k - 1], run.C_pulse[k - 1],
                   run.M_AT_base[k - 1], run.M_AT_pulse[k - 1]] for k in steps]
    tables["scc.csv"] = _scc_table(series)
    tables["pulse.csv"] = (("step", "year", "C_base", "C_pulse", "M_AT_base", "M_AT_pulse"), pulse_rows)
    return _Outcome(tables=tables, results=[result], summary=summary)


def _run_feasibility_search(cfg, params, opts, system_config, jobs) -> _Outcome:
    name = cfg.search_parameter
    base = _spec(cfg, params)
    rows: List[Sequence[Any]] = []
    results: List[SolveResult] = []

    def attempt(value: float):
        problem = build_ocp1(dataclasses.replace(base, **{name: value}))
        result = solve(problem, opts)
        feasible = result.optimal
        if result.status not in (SolverStatus.OPTIMAL, SolverStatus.INFEASIBLE):
            logger.warning(f"{name}={value:g}: {result.status.value}, counted as infeasible")
        rows.append([len(rows) + 1, value, result.status.value, feasible])
        results.append(result)
        logger.info(f"Search {name}={value:.6g}: {result.status.value}")
        return problem, result, feasible

    lo, hi = cfg.search_low, cfg.search_high
    best = attempt(hi)
    search_table = (("iteration", "value", "status", "feasible"), rows)
    if not best[2]:
        logger.error(f"{name}={hi:g} is already infeasible; no threshold in the bracket")
        return _Outcome(tables={"search.csv": search_table}, results=results,
                        summary={"parameter": name, "threshold": None, "bracket": [lo, hi]},
                        exit_code=EXIT_INFEASIBLE, status=SolverStatus.INFEASIBLE.value)

    low_try = attempt(lo)
    if low_try[2]:
        best, hi = low_try, lo
    else:
        while hi - lo > cfg.search_resolution:
            mid = 0.5 * (lo + hi)
            trial = attempt(mid)
            if trial[2]:
                best, hi = trial, mid
            else:
                lo = mid

    problem, result, _ = best
    series = _multiplier_series(result)
    logger.info(f"Threshold for {name}: {hi:.4f} (bracket [{lo:.4f}, {hi:.4f}])")
    table = problem.trajectory(result.primal)
    return _Outcome(
        tables={"search.csv": search_table, "trajectory.csv": _trajectory_table(table, series),
                "scc.csv": _scc_table(series)},
        results=results,
        summary={"parameter": name, "threshold": hi, "bracket": [lo, hi],
                 "peak_T_AT": float(max(table["T_AT"]))},
        exit_code=EXIT_OK,
        status="threshold found",
    )


_RUNNERS: Dict[str, Callable[..., _Outcome]] = {
    "open_loop": _run_open_loop,
    "mpc": _run_mpc,
    "scc_table": _run_scc_table,
    "pulse": _run_pulse,
    "feasibility_search": _run_feasibility_search,
}


def exit_code_for(statuses: Sequence[SolverStatus]) -> int:
    if not statuses:
        return EXIT_SOLVER
    if any(s == SolverStatus.INFEASIBLE for s in statuses):
        return EXIT_INFEASIBLE
    if any(s != SolverStatus.OPTIMAL for s in statuses):
        return EXIT_SOLVER
    return EXIT_OK


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------

def _format_cell(value: Any, float_format: str) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return ""
    return float_format % value


def _inventory(path: str) -> Dict[str, Any]:
    with open(path, "rb") as f:
        data = f.read()
    return {"name": os.path.basename(path), "size": len(data), "sha256": hashlib.sha256(data).hexdigest()}


def prepare_output_dir(path: str, force: bool = False) -> None:
    """Refuse to reuse a non-empty directory unless ``force`` is set."""
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise ConfigError(f"output directory {path} is not empty (use --force to overwrite)", key="out")
    os.makedirs(path, exist_ok=True)


def write_outputs(run: ScenarioRun, out_dir: str, float_format: str = "%.10g") -> List[str]:
    """
    Write every table of ``run`` plus manifest.json into ``out_dir``.

    Returns:
        Written paths in write order; on an IO error the files written so
        far are removed and the error is re-raised
    """
    os.makedirs(out_dir, exist_ok=True)
    written: List[str] = []
    try:
        for name in sorted(run.tables):
            header, rows = run.tables[name]
            path = os.path.join(out_dir, name)
            written.append(path)
            with open(path, "w", newline="") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(header)
                for row in rows:
                    writer.writerow([_format_cell(v, float_format) for v in row])
        run.manifest.files = [_inventory(path) for path in written]
        manifest_path = os.path.join(out_dir, "manifest.json")
        written.append(manifest_path)
        with open(manifest_path, "w") as f:
            f.write(run.manifest.to_json())
    except OSError as e:
        logger.error(f"Error writing outputs to {out_dir}: {e}")
        for path in written:
            try:
                os.remove(path)
            except OSError:
                pass
        raise
    logger.info(f"Results saved to {out_dir} ({len(written)} files)")
    return written


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def load_scenario_params(cfg: ScenarioConfig) -> ParameterSet:
    if cfg.params_file:
        return load_override_file(cfg.params_file, cfg.vintage)
    params = load_parameter_set(cfg.vintage)
    issues = validate(params)
    if issues:
        raise ConfigError("parameter set fails validation: " + "; ".join(issues))
    return params


def run_scenario(cfg: ScenarioConfig, system_config: Optional[Mapping[str, Any]] = None,
                 force: bool = False, jobs: int = 1) -> ScenarioRun:
    """
    Execute one scenario and write its artifacts.

    Args:
        cfg: Validated scenario
        system_config: System configuration (loaded from config.yaml if None)
        force: Allow writing into a non-empty output directory
        jobs: Worker processes for independent solves within the scenario

    Returns:
        ScenarioRun whose manifest carries the exit code
    """
    system_config = system_config or load_system_config()
    params = load_scenario_params(cfg)
    opts = SolverOptions.from_mapping(system_config.get("solver") or {})
    out_dir = cfg.out or os.path.join(system_config["general"].get("output_dir", "results"), cfg.name)
    prepare_output_dir(out_dir, force)

    manifest = RunManifest(
        name=cfg.name,
        mode=cfg.mode,
        config=asdict(cfg),
        params_digest=digest(params),
        version=__version__,
        started=datetime.now().isoformat(timespec="seconds"),
        solver=asdict(opts),
    )
    logger.info(f"{'=' * 50}")
    logger.info(f"SCENARIO: {cfg.name} ({cfg.mode}, {params.vintage.value})")
    if cfg.description:
        logger.info(f"DESCRIPTION: {cfg.description}")
    logger.info(f"{'=' * 50}")

    outcome = _RUNNERS[cfg.mode](cfg, params, opts, system_config, jobs)

    statuses = [r.status for r in outcome.results]
    manifest.exit_code = outcome.exit_code if outcome.exit_code is not None else exit_code_for(statuses)
    if outcome.status is not None:
        manifest.status = outcome.status
    elif statuses:
        manifest.status = next((s.value for s in statuses if s != SolverStatus.OPTIMAL), SolverStatus.OPTIMAL.value)
    manifest.solves = [r.summary() for r in outcome.results]
    manifest.results = outcome.summary
    manifest.finished = datetime.now().isoformat(timespec="seconds")

    run = ScenarioRun(manifest=manifest, tables=dict(outcome.tables))
    if cfg.iteration_log:
        history = [rec for r in outcome.results for rec in r.history]
        run.tables["iterations.csv"] = (ITERATION_COLUMNS, iteration_rows(history))
    write_outputs(run, out_dir, system_config["output"].get("float_format", "%.10g"))
    return run


def _run_one(cfg: ScenarioConfig, system_config: Mapping[str, Any], force: bool, jobs: int) -> int:
    try:
        run = run_scenario(cfg, system_config, force=force, jobs=jobs)
    except (ConfigError, ProblemError) as e:
        logger.error(f"{cfg.name}: {e}")
        return EXIT_CONFIG
    except (SolverError, DomainError, OSError) as e:
        logger.error(f"{cfg.name}: {e}")
        return EXIT_SOLVER
    code = run.manifest.exit_code
    log = logger.info if code == EXIT_OK else logger.error
    log(f"Scenario {cfg.name} finished: {run.manifest.status} (exit code {code})")
    return code


class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the configuration-error code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dice-mpc", description="DICE welfare optimization, MPC and social cost of carbon")
    parser.add_argument("--system-config", default=None, help="System configuration YAML (default: packaged)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    parser.add_argument("--quiet", action="store_true", help="Only warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run one or more scenario files")
    run.add_argument("--config", nargs="+", default=[], help="Scenario file(s) with key = value lines")
    run.add_argument("--vintage", help="2013R or 2016R")
    run.add_argument("--mode", choices=MODES)
    run.add_argument("--N", type=int, help="Prediction horizon in steps")
    run.add_argument("--N-sim", dest="N_sim", type=int, help="Closed-loop steps (mode mpc)")
    run.add_argument("--rho", type=float, nargs="+", help="Pure rate of time preference (list for scc_table)")
    run.add_argument("--tmax", type=float, help="Temperature cap T_max")
    run.add_argument("--rate-bound", type=float, help="Bound on |mu(j+1) - mu(j)|")
    run.add_argument("--growth-bound", type=float, help="Bound on mu(j+1) / mu(j) - 1")
    run.add_argument("--pulse-year", type=int)
    run.add_argument("--pulse-size", type=float, help="Pulse in GtCO2")
    run.add_argument("--out", help="Output directory")
    run.add_argument("--iteration-log", action="store_true", help="Write iterations.csv")
    run.add_argument("--jobs", type=int, default=1, help="Worker processes")
    run.add_argument("--force", action="store_true", help="Overwrite a non-empty output directory")

    show = sub.add_parser("params", help="Print a parameter set as an override file")
    show.add_argument("--vintage", default="2016R")
    show.add_argument("--override", help="Override file applied on top of the vintage")
    return parser


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    rho = args.rho
    if rho is not None and len(rho) == 1:
        rho = rho[0]
    overrides = {
        "vintage": args.vintage, "mode": args.mode, "N": args.N, "N_sim": args.N_sim, "rho": rho,
        "T_max": args.tmax, "rate_bound": args.rate_bound, "growth_bound": args.growth_bound,
        "pulse_year": args.pulse_year, "pulse_size": args.pulse_size, "out": args.out,
    }
    if args.iteration_log:
        overrides["iteration_log"] = True
    return overrides


def _read_config(path: str) -> str:
    try:
        with open(path, "r") as f:
            return f.read()
    except OSError as e:
        raise ConfigError(f"cannot read scenario file {path}: {e}")


def _cmd_run(args: argparse.Namespace, system_config: Mapping[str, Any]) -> int:
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1", key="jobs")
    overrides = _flag_overrides(args)
    paths = args.config or [None]
    if len(paths) > 1 and args.out:
        raise ConfigError("--out applies to a single scenario", key="out")
    configs = []
    for path in paths:
        text = _read_config(path) if path else ""
        try:
            configs.append(parse_config(text, overrides, system_config))
        except ConfigError as e:
            raise ConfigError(f"{path or '<flags>'}: {e}")

    if len(configs) > 1 and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(pool.map(_run_one, configs, [system_config] * len(configs),
                                  [args.force] * len(configs), [1] * len(configs)))
    else:
        codes = [_run_one(cfg, system_config, args.force, args.jobs) for cfg in configs]
    return max(codes)


def _cmd_params(args: argparse.Namespace) -> int:
    if args.override:
        params = load_override_file(args.override, args.vintage)
    else:
        params = load_parameter_set(args.vintage)
    sys.stdout.write(serialize(params))
    for key, value in derived_climate_inputs(params).items():
        sys.stdout.write(f"# derived {key} = {value:.6g}\n")
    issues = validate(params)
    for issue in issues:
        sys.stderr.write(f"invalid: {issue}\n")
    return EXIT_CONFIG if issues else EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    system_config = load_system_config(args.system_config)
    try:
        level = resolve_log_level(system_config, verbose=args.verbose, quiet=args.quiet)
    except ConfigError as e:
        sys.stderr.write(f"dice-mpc: {e}\n")
        return EXIT_CONFIG
    logging.basicConfig(level=level, format=LOG_FORMAT)
    logging.getLogger("dice_mpc").setLevel(level)

    try:
        if args.command == "params":
            return _cmd_params(args)
        return _cmd_run(args, system_config)
    except ConfigError as e:
        logger.error(str(e))
        return EXIT_CONFIG
    except DiceError as e:
        logger.error(str(e))
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
