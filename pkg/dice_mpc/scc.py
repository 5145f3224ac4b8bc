"""
Social cost of carbon.

Two estimates are provided: the ratio of the emissions and consumption
multipliers of a solved problem, and a pulse experiment that adds a
one-off emission to a re-simulated baseline and integrates the discounted
consumption loss. ``cross_validate`` compares the two.
"""

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dynamics import marginal_utility
from .errors import DomainError, SolverError
from .mpc import ClosedLoopRun
from .nlp import SolveResult, SolverOptions, solve
from .transcription import I_C, I_E, I_INDEX, I_L, I_M_AT, N_INPUTS, NlpProblem, augmented_step, build_ocp2

logger = logging.getLogger("dice_mpc.scc")

DEFAULT_TAIL_STEPS = 100
DEFAULT_PULSE_RATE = 0.05
DEFAULT_THRESHOLD = 0.10
END_OF_HORIZON = "end of horizon: emissions do not reach the welfare sum"


@dataclass(frozen=True)
class SccPoint:
    step: int
    year: float
    scc: float
    method: str
    lambda_E: Optional[float] = None
    lambda_C: Optional[float] = None
    rho: Optional[float] = None


@dataclass
class SccSeries:
    """
    SCC values in USD per tonne of CO2, one point per step.

    Steps without a meaningful value are listed in ``skipped`` with the
    reason instead: an unusable lambda_C, or a step too close to the end of
    the horizon for its emissions to reach any consumption in the welfare
    sum (``END_OF_HORIZON``).
    """

    points: List[SccPoint] = field(default_factory=list)
    skipped: List[Tuple[int, str]] = field(default_factory=list)

    @property
    def skipped_steps(self) -> List[int]:
        return [step for step, _ in self.skipped]

    @property
    def years(self) -> np.ndarray:
        return np.array([pt.year for pt in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([pt.scc for pt in self.points])

    def at_year(self, year: float) -> float:
        for pt in self.points:
            if abs(pt.year - year) < 1e-9:
                return pt.scc
        raise KeyError(f"no SCC value for year {year}")

    def as_dict(self) -> Dict[float, float]:
        return {pt.year: pt.scc for pt in self.points}

    def extend(self, other: "SccSeries") -> None:
        self.points.extend(other.points)
        self.skipped.extend(other.skipped)

    def rows(self, float_format: str = "%.10g") -> List[List[str]]:
        def fmt(value):
            return "" if value is None else float_format % value

        return [[float_format % pt.year, fmt(pt.scc), pt.method, fmt(pt.lambda_E), fmt(pt.lambda_C), fmt(pt.rho)]
                for pt in self.points]

    def to_csv(self, path: str, float_format: str = "%.10g") -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["year", "scc", "method", "lambda_E", "lambda_C", "rho"])
            writer.writerows(self.rows(float_format))


def last_informative_step(horizon: int) -> int:
    """
    Last step whose emissions reach the welfare sum.

    E(j) raises M_AT(j+1), which warms T_AT(j+2) and so lowers C(j+2); the
    welfare sum stops at C(N). lambda_E is structurally zero after N - 2.
    """
    return int(horizon) - 2


def scc_from_lambdas(steps: Sequence[int], years: Sequence[float], lambda_E: Sequence[float],
                     lambda_C: Sequence[float], rho: Optional[float] = None,
                     method: str = "multiplier", informative: Optional[Sequence[bool]] = None) -> SccSeries:
    """
    SCC = -1000 lambda_E / lambda_C for every step with a usable lambda_C.

    Steps whose lambda_C is zero, negative or undefined are skipped and
    reported in ``skipped``, as are steps flagged False in ``informative``.
    """
    series = SccSeries()
    if informative is None:
        informative = [True] * len(steps)
    for step, year, lam_E, lam_C, ok in zip(steps, years, lambda_E, lambda_C, informative):
        if not ok:
            series.skipped.append((int(step), END_OF_HORIZON))
            continue
        if not np.isfinite(lam_C) or lam_C == 0.0:
            series.skipped.append((int(step), f"lambda_C = {lam_C:g}"))
            continue
        if lam_C < 0.0:
            series.skipped.append((int(step), f"lambda_C = {lam_C:g} has the wrong sign"))
            continue
        value = -1000.0 * float(lam_E) / float(lam_C) + 0.0
        series.points.append(SccPoint(int(step), float(year), value, method,
                                      float(lam_E), float(lam_C), rho))
    for step, reason in series.skipped:
        logger.debug(f"SCC skipped at step {step}: {reason}")
    return series


def scc_from_multipliers(source: Union[SolveResult, ClosedLoopRun]) -> SccSeries:
    """
    Multiplier-ratio SCC of a solved problem or a closed-loop run.

    Raises:
        SolverError: The solve did not reach an optimal point
    """
    if isinstance(source, ClosedLoopRun):
        X = source.state_matrix
        steps = np.rint(X[:, I_INDEX]).astype(int)
        p = source.params
        years = p.t0 + p.delta * (steps - 1)
        # step 1 reads slot 1 of its own prediction, later steps slot 2 of the previous one
        informative = None
        if source.results and source.results[0].problem:
            last = last_informative_step(source.results[0].problem["horizon"])
            informative = [(1 if k == 0 else 2) <= last for k in range(len(steps))]
        return scc_from_lambdas(steps, years, source.lambda_E, source.lambda_C, p.rho, method="mpc",
                                informative=informative)

    if not source.optimal:
        raise SolverError(f"SCC needs an optimal solve, got {source.status.value}", status=source.status)
    info = source.problem or {}
    lam_E = source.series(I_E)
    lam_C = source.series(I_C)
    steps = np.rint(source.states[:, I_INDEX]).astype(int)
    years = info.get("t0", 0) + info.get("delta", 1.0) * (steps - 1)
    informative = None
    if "horizon" in info:
        last = last_informative_step(info["horizon"])
        informative = [int(k) <= last for k in steps]
    return scc_from_lambdas(steps, years, lam_E, lam_C, info.get("rho"), informative=informative)


@dataclass
class PulseRun:
    """Baseline and pulsed simulations of one pulse experiment."""

    year: float
    step: int
    size: float
    discount: str
    scc: float
    C_base: np.ndarray
    C_pulse: np.ndarray
    M_AT_base: np.ndarray
    M_AT_pulse: np.ndarray
    weights: np.ndarray

    @property
    def max_relative_deviation(self) -> float:
        """Largest relative consumption difference between the two pathways."""
        return float(np.max(np.abs(self.C_base - self.C_pulse) / self.C_base))


def _extended_inputs(W: np.ndarray, length: int) -> np.ndarray:
    if W.shape[0] >= length:
        return W[:length]
    return np.vstack([W, np.repeat(W[-1:], length - W.shape[0], axis=0)])


def _simulate(x1: np.ndarray, W: np.ndarray, p, pulse_step: int, pulse: float) -> np.ndarray:
    X = np.empty((W.shape[0] + 1, x1.size))
    X[0] = x1
    for k in range(W.shape[0]):
        x = X[k]
        if k + 1 == pulse_step and pulse:
            x = x.copy()
            x[I_E] += pulse
        X[k + 1] = augmented_step(x, W[k], p)
    return X


def pulse_experiment(problem: NlpProblem, baseline: SolveResult, pulse_year: float, pulse_size: float,
                     discount: str = "flat", rate: float = DEFAULT_PULSE_RATE,
                     tail_steps: Optional[int] = DEFAULT_TAIL_STEPS) -> PulseRun:
    """
    Re-simulate the baseline with fixed inputs, once plain and once with
    ``pulse_size`` GtCO2 added to the emissions of the pulse step.

    Args:
        problem: Problem the baseline was solved on
        baseline: Its solution (states and inputs are used, held fixed)
        pulse_year: Year of the pulse, on the model's time grid
        pulse_size: Pulse in GtCO2
        discount: "flat" discounts at ``rate`` per year from the pulse year;
            "marginal_utility" weights by discounted marginal utility
            normalized at the pulse step
        rate: Annual rate of the flat discount
        tail_steps: Steps simulated after the pulse; beyond the optimized
            horizon the last input is held constant

    Returns:
        PulseRun with the SCC in USD per tonne of CO2
    """
    p = problem.params
    j = p.step_of_year(pulse_year)
    if j > problem.N + 1:
        raise ValueError(f"pulse year {pulse_year} lies beyond the horizon ({p.year(problem.N + 1):g})")
    if pulse_size < 0:
        raise ValueError(f"pulse size must be nonnegative, got {pulse_size}")
    if discount not in ("flat", "marginal_utility"):
        raise ValueError(f"unknown pulse discount '{discount}'")
    tail = DEFAULT_TAIL_STEPS if tail_steps is None else int(tail_steps)
    total = j + tail

    x1 = baseline.states[0]
    W = _extended_inputs(np.asarray(baseline.inputs).reshape(-1, N_INPUTS), total - 1)
    base = _simulate(x1, W, p, j, 0.0)
    try:
        pulsed = _simulate(x1, W, p, j, float(pulse_size))
    except DomainError as e:
        raise DomainError(f"pulse of {pulse_size:g} GtCO2 drives the simulation out of its domain: {e}")

    k = np.arange(j, total)
    if discount == "flat":
        weights = np.power(1.0 + rate, -p.delta * (k + 1.0 - j))
    else:
        rates = base[:, I_C] / p.delta
        u_c = marginal_utility(rates, base[:, I_L], p.alpha)
        disc = np.power(1.0 + p.rho, -p.delta * (np.arange(1, total + 1) - 1.0))
        weights = (u_c * disc)[k] / (u_c * disc)[j - 1]

    if pulse_size == 0:
        value = 0.0
    else:
        loss = base[k, I_C] - pulsed[k, I_C]
        value = float(1000.0 * np.sum(weights * loss) / pulse_size)

    logger.info(f"Pulse {pulse_size:g} GtCO2 in {pulse_year:g} ({discount}): SCC={value:.4f}")
    return PulseRun(year=float(pulse_year), step=j, size=float(pulse_size), discount=discount, scc=value,
                    C_base=base[:, I_C] / p.delta, C_pulse=pulsed[:, I_C] / p.delta,
                    M_AT_base=base[:, I_M_AT], M_AT_pulse=pulsed[:, I_M_AT], weights=weights)


def scc_pulse(problem: NlpProblem, baseline: SolveResult, pulse_year: float, pulse_size: float,
              pulse_discount: str = "flat", rate: float = DEFAULT_PULSE_RATE,
              tail_steps: Optional[int] = DEFAULT_TAIL_STEPS, reoptimize: bool = False,
              opts: Optional[SolverOptions] = None) -> float:
    """
    Pulse SCC in USD per tonne of CO2.

    With ``reoptimize`` the inputs are re-optimized from the pulse step on,
    and the welfare loss is converted to consumption with lambda_C of the
    re-optimized baseline.
    """
    if not reoptimize:
        return pulse_experiment(problem, baseline, pulse_year, pulse_size, pulse_discount, rate, tail_steps).scc

    p = problem.params
    j = p.step_of_year(pulse_year)
    if pulse_size <= 0:
        return 0.0
    horizon = problem.N + 1 - j
    if horizon < 1:
        raise ValueError(f"pulse year {pulse_year} leaves no steps to re-optimize")

    tail = problem.spec.savings_tail
    if tail is not None:
        tail = (min(tail[0], horizon), tail[1])
    spec = dataclasses.replace(problem.spec, horizon=horizon, savings_tail=tail)
    x_base = baseline.states[j - 1].copy()
    x_pulse = x_base.copy()
    x_pulse[I_E] += pulse_size
    solved = []
    for x in (x_base, x_pulse):
        result = solve(build_ocp2(spec, x), opts)
        if not result.optimal:
            raise SolverError(f"re-optimization after the pulse ended with {result.status.value}",
                              status=result.status)
        solved.append(result)
    lam_C = solved[0].multiplier(1, I_C)
    value = 1000.0 * (solved[0].objective - solved[1].objective) / (pulse_size * lam_C)
    logger.info(f"Re-optimized pulse {pulse_size:g} GtCO2 in {pulse_year:g}: SCC={value:.4f}")
    return float(value)


def pulse_series(problem: NlpProblem, baseline: SolveResult, years: Sequence[float], pulse_size: float,
                 discount: str = "flat", rate: float = DEFAULT_PULSE_RATE,
                 tail_steps: Optional[int] = DEFAULT_TAIL_STEPS) -> SccSeries:
    """Pulse SCC for several years as a series tagged ``pulse``."""
    series = SccSeries()
    for year in years:
        run = pulse_experiment(problem, baseline, year, pulse_size, discount, rate, tail_steps)
        series.points.append(SccPoint(run.step, float(year), run.scc, "pulse", rho=problem.params.rho))
    return series


@dataclass(frozen=True)
class CrossCheckRow:
    year: float
    multiplier: float
    pulse: float
    relative_deviation: float
    flagged: bool


@dataclass
class CrossValidation:
    rows: List[CrossCheckRow]
    threshold: float

    @property
    def flagged_years(self) -> List[float]:
        return [row.year for row in self.rows if row.flagged]

    @property
    def passed(self) -> bool:
        return not self.flagged_years


def cross_validate(series_mult: SccSeries, pulse_runs: Union[SccSeries, Dict[float, float]],
                   threshold: float = DEFAULT_THRESHOLD) -> CrossValidation:
    """
    Relative deviation |pulse - multiplier| / |multiplier| per common year.

    Years whose deviation exceeds ``threshold`` are flagged.
    """
    pulses = pulse_runs.as_dict() if isinstance(pulse_runs, SccSeries) else dict(pulse_runs)
    mult = series_mult.as_dict()
    rows = []
    for year in sorted(set(mult) & set(pulses)):
        m, q = mult[year], pulses[year]
        if m != 0.0:
            dev = abs(q - m) / abs(m)
        else:
            dev = 0.0 if q == 0.0 else float("inf")
        rows.append(CrossCheckRow(year, m, q, dev, dev > threshold))
    report = CrossValidation(rows=rows, threshold=threshold)
    if report.flagged_years:
        logger.warning(f"SCC methods disagree by more than {threshold:.0%} in {report.flagged_years}")
    return report
