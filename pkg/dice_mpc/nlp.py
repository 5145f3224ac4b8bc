"""
Augmented-Lagrangian NLP solver.

Problems are maximizations of a smooth objective subject to equality rows
c(z) = 0, inequality rows h(z) <= 0 and simple bounds. The Lagrangian is

    L(z, y, pi) = J(z) + y . c(z) - pi . h(z),   pi >= 0,

so an equality multiplier is the sensitivity of the optimal objective to a
unit injection into its row. The outer loop updates multipliers and the
penalty on a LANCELOT-style tolerance schedule; the bound-constrained
subproblems are solved with L-BFGS-B. Inequality slacks are eliminated in
closed form.

A model is any object with ``lower``, ``upper``, ``x0`` and
``evaluate(z) -> Evaluation``. Models may also provide ``condensed()``
(an input-only form solved first), ``eq_multiplier_estimate(z, pi)``,
``physical_objective(z)``, ``multipliers_to_physical(y, pi)``,
``to_physical(z)`` and ``describe()``.
"""

import csv
import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy.optimize import Bounds, minimize
from scipy.sparse.linalg import LinearOperator, lsqr

from .errors import ConfigError, DomainError

logger = logging.getLogger("dice_mpc.nlp")

DOMAIN_PENALTY = 1e3


class SolverStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    ITERATION_LIMIT = "IterationLimit"
    NUMERIC_FAILURE = "NumericFailure"


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances apply to the scaled problem."""

    opt_tol: float = 1e-6
    feas_tol: float = 1e-8
    max_iter: int = 500
    max_inner_iter: int = 5000
    inner_ftol: float = 1e-15
    lbfgs_memory: int = 20
    rho0: float = 10.0
    rho_max: float = 1e10
    tau: float = 0.1
    eta0: float = 0.1258925
    omega0: float = 1.0
    a_eta: float = 0.1
    b_eta: float = 0.9
    a_omega: float = 1.0
    b_omega: float = 1.0
    stall_limit: int = 20
    strategy: str = "auto"
    iteration_log: Optional[str] = None

    def __post_init__(self):
        for name in ("opt_tol", "feas_tol", "rho0", "rho_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"must be positive, got {getattr(self, name)}", key=name)
        if not 0 < self.tau < 1:
            raise ConfigError(f"must lie in (0, 1), got {self.tau}", key="tau")
        if self.max_iter < 0 or self.max_inner_iter < 1:
            raise ConfigError("iteration limits must be positive", key="max_iter")
        if self.strategy not in ("auto", "full", "condensed"):
            raise ConfigError(f"unknown strategy '{self.strategy}'", key="strategy")

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], **overrides: Any) -> "SolverOptions":
        known = set(cls.__dataclass_fields__)
        merged = dict(values or {})
        merged.update(overrides)
        for key in merged:
            if key not in known:
                raise ConfigError("unknown solver option", key=key)
        return cls(**merged)


@dataclass
class Evaluation:
    """
    Values and derivative actions at one point.

    vjp(obj_weight, eq_cot, ineq_cot) returns
    obj_weight * grad J + Jc^T eq_cot + Jh^T ineq_cot; jvp(dz) returns
    (Jc dz, Jh dz) and may be absent.
    """

    objective: float
    eq: np.ndarray
    ineq: np.ndarray
    vjp: Callable[[float, np.ndarray, np.ndarray], np.ndarray]
    jvp: Optional[Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None

    @cached_property
    def gradient(self) -> np.ndarray:
        return self.vjp(1.0, np.zeros(self.eq.size), np.zeros(self.ineq.size))


class DenseNlp:
    """
    Small problem given by plain callables and dense Jacobians.

    Args:
        objective: J(z)
        gradient: grad J(z)
        x0: Starting point
        lower, upper: Bounds (default unbounded)
        eq, eq_jacobian: c(z) and its (m_e, n) Jacobian
        ineq, ineq_jacobian: h(z) and its (m_i, n) Jacobian
    """

    def __init__(self, objective: Callable, gradient: Callable, x0,
                 lower=None, upper=None,
                 eq: Optional[Callable] = None, eq_jacobian: Optional[Callable] = None,
                 ineq: Optional[Callable] = None, ineq_jacobian: Optional[Callable] = None):
        self.x0 = np.asarray(x0, dtype=float)
        n = self.x0.size
        self.lower = np.full(n, -np.inf) if lower is None else np.asarray(lower, dtype=float)
        self.upper = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)
        self._objective = objective
        self._gradient = gradient
        self._eq = eq
        self._eq_jacobian = eq_jacobian
        self._ineq = ineq
        self._ineq_jacobian = ineq_jacobian

    def evaluate(self, z: np.ndarray) -> Evaluation:
        z = np.asarray(z, dtype=float)
        n = z.size
        c = np.atleast_1d(np.asarray(self._eq(z), dtype=float)) if self._eq else np.zeros(0)
        h = np.atleast_1d(np.asarray(self._ineq(z), dtype=float)) if self._ineq else np.zeros(0)
        Jc = np.asarray(self._eq_jacobian(z), dtype=float).reshape(c.size, n) if self._eq else np.zeros((0, n))
        Jh = np.asarray(self._ineq_jacobian(z), dtype=float).reshape(h.size, n) if self._ineq else np.zeros((0, n))
        g = np.asarray(self._gradient(z), dtype=float)

        def vjp(obj_weight, eq_cot, ineq_cot):
            return obj_weight * g + Jc.T @ eq_cot + Jh.T @ ineq_cot

        def jvp(dz):
            return Jc @ dz, Jh @ dz

        return Evaluation(objective=float(self._objective(z)), eq=c, ineq=h, vjp=vjp, jvp=jvp)


@dataclass
class IterationRecord:
    phase: str
    iteration: int
    merit_before: float
    merit: float
    feasibility: float
    stationarity: float
    step_size: float
    penalty: float
    inner_iterations: int


@dataclass
class KktReport:
    stationarity: float
    feasibility: float
    complementarity: float
    dual_infeasibility: float

    def passes(self, opt_tol: float, feas_tol: float) -> bool:
        return (self.stationarity <= opt_tol and self.feasibility <= feas_tol
                and self.complementarity <= opt_tol and self.dual_infeasibility <= opt_tol)


@dataclass
class SolveResult:
    status: SolverStatus
    primal: np.ndarray
    objective: float
    eq_multipliers: np.ndarray
    ineq_multipliers: np.ndarray
    bound_multipliers: np.ndarray
    iterations: int
    inner_iterations: int
    stationarity: float
    feasibility: float
    complementarity: float
    message: str = ""
    eq_multipliers_scaled: Optional[np.ndarray] = None
    ineq_multipliers_scaled: Optional[np.ndarray] = None
    eq_tags: Optional[List[Tuple[int, int]]] = None
    ineq_tags: Optional[List[Tuple[str, int]]] = None
    states: Optional[np.ndarray] = None
    inputs: Optional[np.ndarray] = None
    kkt: Optional[KktReport] = None
    history: List[IterationRecord] = field(default_factory=list)
    elapsed_seconds: float = 0.0
    problem: Optional[Dict[str, Any]] = None

    @property
    def optimal(self) -> bool:
        return self.status == SolverStatus.OPTIMAL

    def multiplier(self, step: int, comp: int) -> float:
        """Physical multiplier of the equality row tagged (step, comp)."""
        if self.eq_tags is None:
            raise KeyError("result carries no row tags")
        try:
            return float(self.eq_multipliers[self.eq_tags.index((step, comp))])
        except ValueError:
            raise KeyError(f"no equality row tagged step={step} comp={comp}")

    def series(self, comp: int) -> np.ndarray:
        """Multipliers of rows defining component ``comp`` at steps 1..N+1 (NaN if untagged)."""
        steps = max(step for step, _ in self.eq_tags)
        out = np.full(steps, np.nan)
        for (step, k), value in zip(self.eq_tags, self.eq_multipliers):
            if k == comp:
                out[step - 1] = value
        return out

    def summary(self) -> Dict[str, Any]:
        return {
            "status": self.status.value,
            "objective": self.objective,
            "iterations": self.iterations,
            "inner_iterations": self.inner_iterations,
            "stationarity": self.stationarity,
            "feasibility": self.feasibility,
            "complementarity": self.complementarity,
            "message": self.message,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
        }


@dataclass
class _Outcome:
    status: SolverStatus
    z: np.ndarray
    eq_mult: np.ndarray
    ineq_mult: np.ndarray
    iterations: int
    inner_iterations: int
    stationarity: float
    feasibility: float
    complementarity: float
    message: str
    history: List[IterationRecord]


class _NonFinite(Exception):
    pass


def _projected_step(z, r, lower, upper) -> float:
    if z.size == 0:
        return 0.0
    return float(np.max(np.abs(np.clip(z + r, lower, upper) - z)))


def _measures(ev: Evaluation, z, y, pi, lower, upper) -> Tuple[float, float, float]:
    r = ev.vjp(1.0, y, -pi)
    stationarity = _projected_step(z, r, lower, upper)
    feasibility = 0.0
    if ev.eq.size:
        feasibility = float(np.max(np.abs(ev.eq)))
    if ev.ineq.size:
        feasibility = max(feasibility, float(np.max(ev.ineq)), 0.0)
    complementarity = float(np.max(np.abs(np.minimum(pi, -ev.ineq)))) if ev.ineq.size else 0.0
    return stationarity, feasibility, complementarity


def _least_squares_multipliers(model, ev: Evaluation, z, pi) -> np.ndarray:
    """Equality multipliers minimizing the stationarity residual over free variables."""
    m = ev.eq.size
    if m == 0:
        return np.zeros(0)
    if hasattr(model, "eq_multiplier_estimate"):
        return model.eq_multiplier_estimate(z, pi)
    if ev.jvp is None:
        return np.zeros(m)
    free = (z > model.lower + 1e-12) & (z < model.upper - 1e-12)
    if not np.any(free):
        return np.zeros(m)
    g = ev.vjp(1.0, np.zeros(m), -pi)
    zeros_i = np.zeros(ev.ineq.size)

    def matvec(y):
        return ev.vjp(0.0, np.ravel(y), zeros_i)[free]

    def rmatvec(v):
        full = np.zeros(z.size)
        full[free] = np.ravel(v)
        return ev.jvp(full)[0]

    op = LinearOperator((int(free.sum()), m), matvec=matvec, rmatvec=rmatvec)
    return lsqr(op, -g[free], atol=1e-14, btol=1e-14, iter_lim=max(10 * m, 100))[0]


def _augmented_lagrangian(model, opts: SolverOptions, z0: np.ndarray,
                          y0: Optional[np.ndarray], pi0: Optional[np.ndarray],
                          phase: str, first_iteration: int = 1) -> _Outcome:
    lower, upper = model.lower, model.upper
    bounds = Bounds(lower, upper)
    z = np.clip(np.asarray(z0, dtype=float), lower, upper)
    history: List[IterationRecord] = []

    try:
        ev = model.evaluate(z)
    except DomainError as e:
        return _Outcome(SolverStatus.NUMERIC_FAILURE, z, np.zeros(0), np.zeros(0), 0, 0,
                        np.inf, np.inf, np.inf, str(e), history)

    pi = np.zeros(ev.ineq.size) if pi0 is None or pi0.size != ev.ineq.size else np.maximum(pi0, 0.0)
    if y0 is not None and y0.size == ev.eq.size:
        y = np.array(y0, dtype=float)
    else:
        y = _least_squares_multipliers(model, ev, z, pi)

    rho, eta, omega = opts.rho0, opts.eta0, opts.omega0
    stationarity, feasibility, complementarity = _measures(ev, z, y, pi, lower, upper)
    logger.info(f"[{phase}] start: n={z.size} eq={ev.eq.size} ineq={ev.ineq.size} "
                f"feas={feasibility:.3e} opt={stationarity:.3e}")

    def outcome(status, message, k, inner):
        return _Outcome(status, z, y, pi, k, inner, stationarity, feasibility, complementarity, message, history)

    def converged():
        return (feasibility <= opts.feas_tol and stationarity <= opts.opt_tol
                and complementarity <= opts.opt_tol)

    if converged():
        return outcome(SolverStatus.OPTIMAL, "initial point satisfies the KKT conditions", 0, 0)

    floor_omega = 0.1 * opts.opt_tol
    floor_eta = 0.1 * opts.feas_tol
    best_infeasibility = np.inf
    stall = 0
    idle = 0
    inner_total = 0

    for k in range(1, opts.max_iter + 1):
        y_k, pi_k, rho_k = y.copy(), pi.copy(), rho
        rejected = [0, 0.0]

        def merit(v):
            try:
                e = model.evaluate(v)
            except DomainError as err:
                # trial point outside the model's domain: a large finite value makes the line search backtrack
                rejected[0] += 1
                logger.debug(f"[{phase}] iter {k}: trial point rejected ({err})")
                return rejected[1], np.zeros_like(v)
            c, h = e.eq, e.ineq
            shifted = np.maximum(0.0, pi_k + rho_k * h)
            phi = (-e.objective - y_k @ c + 0.5 * rho_k * (c @ c)
                   + (shifted @ shifted - pi_k @ pi_k) / (2.0 * rho_k))
            grad = e.vjp(-1.0, -y_k + rho_k * c, shifted)
            if not np.isfinite(phi) or not np.all(np.isfinite(grad)):
                raise _NonFinite(f"non-finite merit at outer iteration {k}")
            return phi, grad

        try:
            merit_before = merit(z)[0]
            rejected[1] = merit_before + DOMAIN_PENALTY * (1.0 + abs(merit_before))
            res = minimize(merit, z, jac=True, method="L-BFGS-B", bounds=bounds,
                           options={"maxiter": opts.max_inner_iter, "maxfun": 4 * opts.max_inner_iter,
                                    "gtol": omega, "ftol": opts.inner_ftol,
                                    "maxcor": opts.lbfgs_memory, "maxls": 50})
            z_new = np.clip(res.x, lower, upper)
            ev = model.evaluate(z_new)
            if rejected[0]:
                logger.info(f"[{phase}] iter {k}: {rejected[0]} trial points outside the domain were rejected")
        except (_NonFinite, DomainError, FloatingPointError) as e:
            logger.warning(f"[{phase}] numeric failure: {e}")
            return outcome(SolverStatus.NUMERIC_FAILURE, str(e), k, inner_total)

        step_size = float(np.max(np.abs(z_new - z))) if z.size else 0.0
        z = z_new
        inner_total += int(res.nit)
        c, h = ev.eq, ev.ineq

        infeasibility = 0.0
        if c.size:
            infeasibility = float(np.max(np.abs(c)))
        if h.size:
            infeasibility = max(infeasibility, float(np.max(np.abs(np.maximum(h, -pi / rho)))))

        if infeasibility <= eta:
            y = y - rho * c
            pi = np.maximum(0.0, pi + rho * h)
            eta = max(eta / rho ** opts.b_eta, floor_eta)
            omega = max(omega / rho ** opts.b_omega, floor_omega)
            logger.debug(f"[{phase}] iter {k}: multiplier update, eta={eta:.2e} omega={omega:.2e}")
        else:
            rho = rho / opts.tau
            eta = max(opts.eta0 / rho ** opts.a_eta, floor_eta)
            omega = max(opts.omega0 / rho ** opts.a_omega, floor_omega)
            logger.debug(f"[{phase}] iter {k}: restoration, penalty raised to {rho:.2e}")

        stationarity, feasibility, complementarity = _measures(ev, z, y, pi, lower, upper)
        history.append(IterationRecord(phase, first_iteration + k - 1, float(merit_before), float(res.fun),
                                       feasibility, stationarity, step_size, rho_k, int(res.nit)))
        logger.info(f"[{phase}] iter {k:3d} merit={res.fun:.10e} feas={feasibility:.3e} "
                    f"opt={stationarity:.3e} rho={rho_k:.1e} inner={res.nit}")

        if converged():
            return outcome(SolverStatus.OPTIMAL, "KKT tolerances met", k, inner_total)

        infeasible = feasibility > 1e2 * opts.feas_tol
        if infeasible:
            if feasibility < 0.99 * best_infeasibility:
                best_infeasibility = feasibility
                stall = 0
            else:
                stall += 1

        idle = idle + 1 if res.nit == 0 and omega <= floor_omega else 0
        if infeasible and (stall >= opts.stall_limit or rho >= opts.rho_max or idle >= 3):
            return outcome(SolverStatus.INFEASIBLE,
                           f"infeasibility {feasibility:.3e} persists (penalty {rho:.1e})", k, inner_total)
        if idle >= 3:
            return outcome(SolverStatus.ITERATION_LIMIT, "no further progress possible", k, inner_total)

    return outcome(SolverStatus.ITERATION_LIMIT, f"reached {opts.max_iter} outer iterations",
                   opts.max_iter, inner_total)


def kkt_residuals(model, z: np.ndarray, eq_mult: np.ndarray, ineq_mult: np.ndarray) -> KktReport:
    """
    Independent first-order check of a candidate point.

    Args:
        model: Problem in solver (scaled) form
        z: Candidate point
        eq_mult, ineq_mult: Scaled multipliers

    Returns:
        Residuals of stationarity (projected on the bounds), primal
        feasibility, complementarity and dual feasibility
    """
    z = np.asarray(z, dtype=float)
    ev = model.evaluate(z)
    m_i = ev.ineq.size
    r = ev.gradient + ev.vjp(0.0, eq_mult, np.zeros(m_i)) - ev.vjp(0.0, np.zeros(ev.eq.size), ineq_mult)
    stationarity = _projected_step(z, r, model.lower, model.upper)
    feasibility = float(np.max(np.abs(ev.eq))) if ev.eq.size else 0.0
    if m_i:
        feasibility = max(feasibility, float(np.max(np.maximum(ev.ineq, 0.0))))
        complementarity = float(np.max(np.abs(ineq_mult * ev.ineq)))
        dual = float(np.max(np.maximum(-ineq_mult, 0.0)))
    else:
        complementarity = dual = 0.0
    return KktReport(stationarity, feasibility, complementarity, dual)


def bound_multipliers(model, z: np.ndarray, eq_mult: np.ndarray, ineq_mult: np.ndarray,
                      tol: float = 1e-10) -> np.ndarray:
    """Nonnegative multipliers of active bounds (zero for inactive ones)."""
    ev = model.evaluate(z)
    r = ev.vjp(1.0, eq_mult, -ineq_mult)
    at_upper = z >= model.upper - tol
    at_lower = z <= model.lower + tol
    out = np.zeros(z.size)
    out[at_upper] = np.maximum(r[at_upper], 0.0)
    out[at_lower] = np.maximum(-r[at_lower], 0.0)
    return out


def _finish(problem, out: _Outcome, z, y, pi, history, started, iterations, inner) -> SolveResult:
    kkt = kkt_residuals(problem, z, y, pi)
    bounds_mult = bound_multipliers(problem, z, y, pi)
    if hasattr(problem, "multipliers_to_physical"):
        y_phys, pi_phys = problem.multipliers_to_physical(y, pi)
    else:
        y_phys, pi_phys = y, pi
    objective = (problem.physical_objective(z) if hasattr(problem, "physical_objective")
                 else problem.evaluate(z).objective)
    states = inputs = None
    if hasattr(problem, "to_physical"):
        states, inputs = problem.to_physical(z)
    return SolveResult(
        status=out.status,
        primal=z,
        objective=float(objective),
        eq_multipliers=y_phys,
        ineq_multipliers=pi_phys,
        bound_multipliers=bounds_mult,
        iterations=iterations,
        inner_iterations=inner,
        stationarity=kkt.stationarity,
        feasibility=kkt.feasibility,
        complementarity=kkt.complementarity,
        message=out.message,
        eq_multipliers_scaled=y,
        ineq_multipliers_scaled=pi,
        eq_tags=getattr(problem, "eq_tags", None),
        ineq_tags=getattr(problem, "ineq_tags", None),
        states=states,
        inputs=inputs,
        kkt=kkt,
        history=history,
        elapsed_seconds=time.perf_counter() - started,
        problem=problem.describe() if hasattr(problem, "describe") else None,
    )


ITERATION_COLUMNS = ("iter", "merit", "feas", "opt", "step_size")


def iteration_rows(history: List[IterationRecord]) -> List[List[Any]]:
    return [[rec.iteration, rec.merit, rec.feasibility, rec.stationarity, rec.step_size] for rec in history]


def write_iteration_log(history: List[IterationRecord], path: str, float_format: str = "%.10g") -> None:
    """CSV with columns iter, merit, feas, opt, step_size."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(ITERATION_COLUMNS)
        for row in iteration_rows(history):
            writer.writerow([row[0]] + [float_format % v for v in row[1:]])


def solve(problem, opts: Optional[SolverOptions] = None, warm_start: Optional[np.ndarray] = None,
          warm_multipliers: Optional[Tuple[np.ndarray, np.ndarray]] = None) -> SolveResult:
    """
    Maximize a model's objective.

    Structured models are first solved in condensed (input-only) form; the
    expanded point then seeds the full-space iteration, which stops at once
    when the expanded point already satisfies the KKT tolerances.

    Args:
        problem: Model to solve
        opts: Solver options
        warm_start: Starting point in the model's (scaled) variables
        warm_multipliers: Optional scaled (eq, ineq) multipliers for the full space

    Returns:
        SolveResult with physical multipliers when the model defines them
    """
    opts = opts or SolverOptions()
    started = time.perf_counter()
    z0 = problem.x0 if warm_start is None else np.asarray(warm_start, dtype=float)
    y0, pi0 = warm_multipliers if warm_multipliers is not None else (None, None)
    history: List[IterationRecord] = []
    iterations = inner = 0

    if opts.strategy != "full" and hasattr(problem, "condensed"):
        reduced = problem.condensed()
        out = _augmented_lagrangian(reduced, opts, reduced.restrict(z0), None, pi0, "condensed")
        history.extend(out.history)
        iterations, inner = out.iterations, out.inner_iterations
        z0 = reduced.expand(out.z)
        pi0 = out.ineq_mult
        y0 = problem.eq_multiplier_estimate(z0, pi0)
        if out.status in (SolverStatus.INFEASIBLE, SolverStatus.NUMERIC_FAILURE) or opts.strategy == "condensed":
            result = _finish(problem, out, z0, y0, pi0, history, started, iterations, inner)
            _log_result(result, opts)
            return result

    out = _augmented_lagrangian(problem, opts, z0, y0, pi0, "full", first_iteration=iterations + 1)
    history.extend(out.history)
    result = _finish(problem, out, out.z, out.eq_mult, out.ineq_mult, history, started,
                     iterations + out.iterations, inner + out.inner_iterations)
    _log_result(result, opts)
    return result


def _log_result(result: SolveResult, opts: SolverOptions) -> None:
    if opts.iteration_log:
        write_iteration_log(result.history, opts.iteration_log)
    log = logger.info if result.optimal else logger.warning
    log(f"Solve finished: {result.status.value} after {result.iterations} iterations "
        f"({result.inner_iterations} inner), objective={result.objective:.10g}, "
        f"feas={result.feasibility:.2e}, opt={result.stationarity:.2e}")


def check_gradient(problem, point: np.ndarray, h: float = 1e-5, n_coords: int = 50, seed: int = 0) -> float:
    """
    Compare reverse-mode derivatives with central differences.

    The tested scalar is J + v . c + u . h for seeded random weights v, u,
    so equality and inequality Jacobians are exercised together.

    Returns:
        max over sampled coordinates of |analytic - fd| / (1 + |analytic|)
    """
    rng = np.random.default_rng(seed)
    point = np.asarray(point, dtype=float)
    ev = problem.evaluate(point)
    v = rng.standard_normal(ev.eq.size)
    u = rng.standard_normal(ev.ineq.size)
    analytic = ev.vjp(1.0, v, u)

    def phi(z):
        e = problem.evaluate(z)
        return e.objective + v @ e.eq + u @ e.ineq

    n = point.size
    coords = rng.choice(n, size=min(n, max(n_coords, 50)), replace=False)
    worst = 0.0
    for i in coords:
        step = np.zeros(n)
        step[i] = h
        fd = (phi(point + step) - phi(point - step)) / (2.0 * h)
        worst = max(worst, abs(analytic[i] - fd) / (1.0 + abs(analytic[i])))
    return float(worst)


def evaluate(problem, point: np.ndarray) -> Evaluation:
    """Objective, constraint rows and derivative actions of ``problem`` at ``point``."""
    return problem.evaluate(np.asarray(point, dtype=float))
