"""
Receding-horizon (MPC) solution of the DICE welfare problem.

Step 1 solves the problem with free first-step controls. Every later step
pins the whole augmented state to the second state of the previous
prediction and re-solves, so the closed loop advances one step per solve.
"""

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from .errors import ProblemError, SolverError
from .nlp import SolveResult, SolverOptions, SolverStatus, solve
from .params import ParameterSet
from .transcription import (I_C, I_E, I_INDEX, I_MU, I_S, N_INPUTS, NlpProblem, OcpSpec, build_ocp1,
                            build_ocp2, rollout, trajectory_table)

logger = logging.getLogger("dice_mpc.mpc")


@dataclass(frozen=True)
class MpcConfig:
    """
    Closed-loop settings.

    Args:
        spec: Template problem; its horizon is the prediction horizon N
        N_sim: Number of closed-loop steps
        warm_start: Seed each solve with the shifted previous prediction
        compat_lambda_c: Take lambda_C from the first slot of the previous
            prediction instead of the second, pairing lambda_E and lambda_C
            from different time points; for comparison runs
        solver: Solver options shared by every step
    """

    spec: OcpSpec
    N_sim: int
    warm_start: bool = True
    compat_lambda_c: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if int(self.N_sim) != self.N_sim or self.N_sim < 1:
            raise ProblemError(f"N_sim must be a positive integer, got {self.N_sim}")
        if int(self.spec.horizon) != self.spec.horizon or self.spec.horizon < 1:
            raise ProblemError(f"prediction horizon must be a positive integer, got {self.spec.horizon}")

    @property
    def N(self) -> int:
        return int(self.spec.horizon)


@dataclass
class ClosedLoopRun:
    """Applied states and multipliers, one entry per closed-loop step."""

    params: ParameterSet
    states: List[np.ndarray] = field(default_factory=list)
    lambda_E: List[float] = field(default_factory=list)
    lambda_C: List[float] = field(default_factory=list)
    statuses: List[SolverStatus] = field(default_factory=list)
    results: List[SolveResult] = field(default_factory=list)
    shift_gaps: List[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.states)

    @property
    def state_matrix(self) -> np.ndarray:
        return np.array(self.states)

    @property
    def years(self) -> np.ndarray:
        i = np.rint(self.state_matrix[:, I_INDEX])
        return self.params.t0 + self.params.delta * (i - 1.0)

    @property
    def scc(self) -> np.ndarray:
        """-1000 lambda_E / lambda_C per step (NaN where lambda_C is not positive)."""
        lam_E = np.array(self.lambda_E, dtype=float)
        lam_C = np.array(self.lambda_C, dtype=float)
        out = np.full(lam_E.shape, np.nan)
        ok = lam_C > 0
        out[ok] = -1000.0 * lam_E[ok] / lam_C[ok] + 0.0
        return out

    @property
    def welfare(self) -> float:
        """Discounted utility accumulated along the recorded closed-loop states."""
        return float(self.state_matrix[-1, -1])

    def summaries(self) -> List[Dict[str, Any]]:
        return [r.summary() for r in self.results]

    def trajectory(self) -> Dict[str, np.ndarray]:
        return trajectory_table(self.state_matrix, self.params)


def _shifted_guess(problem: NlpProblem, previous: SolveResult) -> np.ndarray:
    """Previous inputs shifted by one step, last input repeated, states rolled out."""
    W_prev = previous.inputs
    W = np.vstack([W_prev[1:], W_prev[-1:]])
    if W.shape[0] != problem.N:
        W = np.vstack([W, np.repeat(W[-1:], problem.N - W.shape[0], axis=0)])[:problem.N]
    w_lo = problem.lower[problem.n_x:].reshape(problem.N, N_INPUTS)
    w_hi = problem.upper[problem.n_x:].reshape(problem.N, N_INPUTS)
    W = np.clip(W, w_lo, w_hi)
    X = rollout(problem.x_template, W, problem.params)
    return np.clip(problem.pack(X, W), problem.lower, problem.upper)


def _shift_gap(problem: NlpProblem, previous: SolveResult, current: SolveResult) -> float:
    """max_j |x*(j+1 | i-1) - x*(j | i)| in scaled units over the overlapping steps."""
    prev, cur = previous.states[1:], current.states[:-1]
    n = min(prev.shape[0], cur.shape[0])
    return float(np.max(np.abs(prev[:n] - cur[:n]) / problem.state_scale))


def run_mpc(cfg: MpcConfig, on_step: Optional[Callable[[int, ClosedLoopRun], None]] = None) -> ClosedLoopRun:
    """
    Run the closed loop for cfg.N_sim steps.

    Args:
        cfg: Closed-loop settings
        on_step: Optional callback invoked after each recorded step

    Returns:
        The closed-loop run

    Raises:
        SolverError: A step did not solve to optimality; ``partial`` holds
            the run up to the failing step
    """
    spec1 = dataclasses.replace(cfg.spec, mode="ocp1", x_init=None)
    problem = build_ocp1(spec1)
    run = ClosedLoopRun(params=problem.params)
    logger.info(f"MPC: N={cfg.N}, N_sim={cfg.N_sim}, warm_start={cfg.warm_start}")

    result = solve(problem, cfg.solver)
    _require_optimal(result, 1, run)
    run.results.append(result)
    run.statuses.append(result.status)
    run.states.append(result.states[0].copy())
    run.lambda_E.append(result.multiplier(1, I_E))
    run.lambda_C.append(result.multiplier(1, I_C))
    _log_step(run)
    if on_step:
        on_step(1, run)

    previous, prev_problem = result, problem
    for i in range(2, cfg.N_sim + 1):
        x_init = previous.states[1].copy()
        lam_E = previous.multiplier(2, I_E)
        lam_C = previous.multiplier(1 if cfg.compat_lambda_c else 2, I_C)

        problem = build_ocp2(cfg.spec, x_init)
        warm = _shifted_guess(problem, previous) if cfg.warm_start else None
        result = solve(problem, cfg.solver, warm_start=warm)

        run.results.append(result)
        run.statuses.append(result.status)
        run.states.append(x_init)
        run.lambda_E.append(lam_E)
        run.lambda_C.append(lam_C)
        _require_optimal(result, i, run)
        run.shift_gaps.append(_shift_gap(prev_problem, previous, result))
        _log_step(run)
        if on_step:
            on_step(i, run)
        previous, prev_problem = result, problem

    return run


def _require_optimal(result: SolveResult, i: int, run: ClosedLoopRun) -> None:
    if result.status != SolverStatus.OPTIMAL:
        logger.error(f"MPC step {i}: {result.status.value} ({result.message})")
        raise SolverError(f"closed-loop step {i} ended with status {result.status.value}: {result.message}",
                          status=result.status, partial=run)


def _log_step(run: ClosedLoopRun) -> None:
    x = run.states[-1]
    year = run.params.year(round(x[I_INDEX]))
    scc = run.scc[-1]
    logger.info(f"MPC step {run.steps}: year={year:g} status={run.statuses[-1].value} "
                f"mu={x[I_MU]:.4f} s={x[I_S]:.4f} scc={scc:.4f}")
