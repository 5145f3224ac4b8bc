"""
Direct transcription of the DICE welfare problem.

The augmented state has 17 components (0-based here, x1..x17 in residual
dumps):

    0 index i        6 K          12 E  (GtCO2 emitted over the step)
    1 T_AT           7 sigma      13 C  (trillion USD consumed over the step)
    2 T_LO           8 L          14 mu
    3 M_AT           9 A          15 s
    4 M_UP          10 E_Land     16 W  (accumulated discounted utility)
    5 M_LO          11 F_EX

Inputs are w(j) = (mu(j+1), s(j+1)). Decision vector layout (scaled):
x(1..N+1) row-major, followed by w(1..N) row-major. Equality rows are the
initial-condition pins (tagged step 1) followed by the dynamics rows
f(x(j), w(j)) - x(j+1) (tagged step j+1). All rows and variables are scaled
by per-component magnitudes of the initial guess.
"""

import dataclasses
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from . import dynamics
from .errors import DomainError, ProblemError
from .exogenous import forcing_exo
from .nlp import Evaluation
from .params import ParameterSet

logger = logging.getLogger("dice_mpc.transcription")

(I_INDEX, I_T_AT, I_T_LO, I_M_AT, I_M_UP, I_M_LO, I_K, I_SIGMA, I_L, I_A,
 I_E_LAND, I_F_EX, I_E, I_C, I_MU, I_S, I_W) = range(17)
N_STATES = 17
N_INPUTS = 2

STATE_NAMES = ("index", "T_AT", "T_LO", "M_AT", "M_UP", "M_LO", "K", "sigma", "L", "A",
               "E_Land", "F_EX", "E", "C", "mu", "s", "W")

POSITIVE_STATES = (I_M_AT, I_M_UP, I_M_LO, I_K, I_L, I_A, I_C)
POSITIVITY_FRACTION = 1e-6
SAVINGS_CEILING = 1.0 - 1e-6
INITIAL_SAVINGS = 0.25

AugmentedState = np.ndarray


# ---------------------------------------------------------------------------
# augmented dynamics and their adjoint
# ---------------------------------------------------------------------------

def _check_positive(values: np.ndarray, index: np.ndarray, component: str) -> None:
    bad = ~(values > 0)
    if np.any(bad):
        row = int(np.argmax(bad.ravel()))
        step = int(np.ravel(index)[row]) if np.ndim(index) else int(index)
        raise DomainError(f"{component} must be positive, got {np.ravel(values)[row]:g}",
                          step=step, component=component)


def _flow_terms(T_AT, K, sig, L, A, EL, mu, s, i, p: ParameterSet) -> Dict[str, np.ndarray]:
    """Output, abatement, step emissions (x13) and step consumption (x14)."""
    Y = dynamics.gross_output(A, K, L, p.gamma)
    Om = dynamics.damages_factor(T_AT, p.a2, p.a3)
    th1_coef = p.pb / (1000.0 * p.theta2) * np.power(1.0 - p.delta_pb, i - 1.0)
    th1 = th1_coef * sig
    mu_c = np.maximum(mu, 0.0)
    mu_pow = np.power(mu_c, p.theta2)
    ab = 1.0 - th1 * mu_pow
    Q = Om * ab * Y
    E = p.delta * (sig * (1.0 - mu) * Y + EL)
    C = p.delta * Q * (1.0 - s)
    return dict(Y=Y, Om=Om, th1_coef=th1_coef, th1=th1, mu_c=mu_c, mu_pow=mu_pow, ab=ab, Q=Q, E=E, C=C)


def _flow_terms_vjp(ft, T_AT, K, sig, L, A, mu, s, p: ParameterSet, bQ, bE, bC) -> Dict[str, np.ndarray]:
    d = p.delta
    Y, Om, ab, Q = ft["Y"], ft["Om"], ft["ab"], ft["Q"]

    bQ = bQ + d * (1.0 - s) * bC
    b_s = -d * Q * bC
    b_sig = d * (1.0 - mu) * Y * bE
    b_mu = -d * sig * Y * bE
    bY = d * sig * (1.0 - mu) * bE
    b_EL = d * bE

    bOm = ab * Y * bQ
    bab = Om * Y * bQ
    bY = bY + Om * ab * bQ

    bth1 = -ft["mu_pow"] * bab
    b_mu = b_mu - ft["th1"] * p.theta2 * np.power(ft["mu_c"], p.theta2 - 1.0) * bab
    b_sig = b_sig + ft["th1_coef"] * bth1

    absT = np.abs(T_AT)
    dOm = -p.a2 * p.a3 * np.power(absT, p.a3 - 1.0) * np.sign(T_AT) * Om * Om
    b_T = dOm * bOm

    b_A = Y / A * bY
    b_K = p.gamma * Y / K * bY
    b_L = (1.0 - p.gamma) * Y / L * bY
    return dict(T_AT=b_T, K=b_K, sig=b_sig, L=b_L, A=b_A, EL=b_EL, mu=b_mu, s=b_s)


def _exogenous_factors(i, p: ParameterSet):
    """sigma, TFP growth factors and next-step forcing for step index i."""
    g_sig = np.exp(-p.g_sigma * np.power(1.0 - p.delta_sigma, p.delta * (i - 1.0)) * p.delta)
    g = p.gA * np.exp(-p.delta_A * p.delta * (i - 1.0))
    if np.any(g >= 1.0):
        raise DomainError("TFP growth term reached 1", step=int(np.max(i)), component="A")
    g_A = 1.0 / (1.0 - g)
    F_EX_next = p.f0 + np.minimum(p.f1 - p.f0, (p.f1 - p.f0) / p.tf * i)
    return g_sig, g_A, F_EX_next


def _forward(x: np.ndarray, w: np.ndarray, p: ParameterSet):
    i = np.rint(x[..., I_INDEX])
    T_AT, T_LO = x[..., I_T_AT], x[..., I_T_LO]
    M_AT, M_UP, M_LO = x[..., I_M_AT], x[..., I_M_UP], x[..., I_M_LO]
    K, sig, L, A = x[..., I_K], x[..., I_SIGMA], x[..., I_L], x[..., I_A]
    EL, FEX = x[..., I_E_LAND], x[..., I_F_EX]

    _check_positive(M_AT, i, "M_AT")
    _check_positive(K, i, "K")
    _check_positive(L, i, "L")
    _check_positive(A, i, "A")
    _check_positive(x[..., I_C], i, "C")

    now = _flow_terms(T_AT, K, sig, L, A, EL, x[..., I_MU], x[..., I_S], i, p)
    F = p.eta * np.log(M_AT / p.M_AT_1750) / dynamics.LOG2 + FEX
    g_sig, g_A, F_EX_next = _exogenous_factors(i, p)
    pop_ratio = np.power((1.0 + p.La) / (1.0 + L), p.lg)

    nxt = np.empty_like(x)
    nxt[..., I_INDEX] = x[..., I_INDEX] + 1.0
    nxt[..., I_T_AT] = p.phi11 * T_AT + p.phi12 * T_LO + p.xi1 * F
    nxt[..., I_T_LO] = p.phi21 * T_AT + p.phi22 * T_LO
    nxt[..., I_M_AT] = p.zeta11 * M_AT + p.zeta12 * M_UP + p.xi2 * x[..., I_E]
    nxt[..., I_M_UP] = p.zeta21 * M_AT + p.zeta22 * M_UP + p.zeta23 * M_LO
    nxt[..., I_M_LO] = p.zeta32 * M_UP + p.zeta33 * M_LO
    nxt[..., I_K] = p.phi_K * K + p.delta * now["Q"] * x[..., I_S]
    nxt[..., I_SIGMA] = sig * g_sig
    nxt[..., I_L] = L * pop_ratio
    nxt[..., I_A] = A * g_A
    nxt[..., I_E_LAND] = EL * (1.0 - p.delta_EL)
    nxt[..., I_F_EX] = F_EX_next

    _check_positive(nxt[..., I_K], i + 1, "K")
    nxt_flows = _flow_terms(nxt[..., I_T_AT], nxt[..., I_K], nxt[..., I_SIGMA], nxt[..., I_L],
                            nxt[..., I_A], nxt[..., I_E_LAND], w[..., 0], w[..., 1], i + 1.0, p)
    nxt[..., I_E] = nxt_flows["E"]
    nxt[..., I_C] = nxt_flows["C"]
    nxt[..., I_MU] = w[..., 0]
    nxt[..., I_S] = w[..., 1]

    pc = 1000.0 * x[..., I_C] / (p.delta * L)
    log_pc = np.log(pc)
    if p.alpha == 1.0:
        U = L * log_pc
        pc_pow = np.ones_like(pc)
    else:
        U = L * np.expm1((1.0 - p.alpha) * log_pc) / (1.0 - p.alpha)
        pc_pow = np.exp((1.0 - p.alpha) * log_pc)
    disc = np.power(1.0 + p.rho, -p.delta * (i - 1.0))
    nxt[..., I_W] = x[..., I_W] + U * disc

    cache = dict(i=i, now=now, nxt_flows=nxt_flows, g_sig=g_sig, g_A=g_A, pop_ratio=pop_ratio,
                 pc=pc, pc_pow=pc_pow, U=U, disc=disc)
    return nxt, cache


def augmented_step(x: AugmentedState, w, p: ParameterSet) -> AugmentedState:
    """
    x(i+1) = f(x(i), w(i)); broadcasts over leading dimensions.

    Args:
        x: Augmented state(s), shape (..., 17)
        w: Inputs (mu(i+1), s(i+1)), shape (..., 2)
        p: Parameter set

    Returns:
        Next augmented state(s)
    """
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    nxt, _ = _forward(x, w, p)
    return nxt


def augmented_step_vjp(x, w, ct, p: ParameterSet) -> Tuple[np.ndarray, np.ndarray]:
    """Cotangent ct on f(x, w) pulled back to (x, w); broadcasts like augmented_step."""
    x = np.asarray(x, dtype=float)
    w = np.asarray(w, dtype=float)
    ct = np.asarray(ct, dtype=float)
    nxt, c = _forward(x, w, p)

    xb = np.zeros_like(x)
    wb = np.zeros_like(w)
    # the step index is rounded inside _forward, so it only carries through
    xb[..., I_INDEX] = ct[..., I_INDEX]

    b_TAT = ct[..., I_T_AT].copy()
    b_TLO = ct[..., I_T_LO]
    b_MAT, b_MUP, b_MLO = ct[..., I_M_AT], ct[..., I_M_UP], ct[..., I_M_LO]
    b_K = ct[..., I_K].copy()
    b_sig = ct[..., I_SIGMA].copy()
    b_L = ct[..., I_L].copy()
    b_A = ct[..., I_A].copy()
    b_EL = ct[..., I_E_LAND].copy()

    # next-step emissions and consumption
    g = _flow_terms_vjp(c["nxt_flows"], nxt[..., I_T_AT], nxt[..., I_K], nxt[..., I_SIGMA], nxt[..., I_L],
                        nxt[..., I_A], w[..., 0], w[..., 1], p,
                        bQ=0.0, bE=ct[..., I_E], bC=ct[..., I_C])
    b_TAT += g["T_AT"]
    b_K += g["K"]
    b_sig += g["sig"]
    b_L += g["L"]
    b_A += g["A"]
    b_EL += g["EL"]
    wb[..., 0] = g["mu"] + ct[..., I_MU]
    wb[..., 1] = g["s"] + ct[..., I_S]

    # exogenous updates
    L = x[..., I_L]
    xb[..., I_E_LAND] += (1.0 - p.delta_EL) * b_EL
    xb[..., I_A] += c["g_A"] * b_A
    xb[..., I_L] += c["pop_ratio"] * (1.0 - p.lg * L / (1.0 + L)) * b_L
    xb[..., I_SIGMA] += c["g_sig"] * b_sig

    # capital
    xb[..., I_K] += p.phi_K * b_K
    bQ = p.delta * x[..., I_S] * b_K
    xb[..., I_S] += p.delta * c["now"]["Q"] * b_K

    # welfare
    b_W = ct[..., I_W]
    xb[..., I_W] += b_W
    bU = c["disc"] * b_W
    xb[..., I_C] += bU * 1000.0 * c["pc_pow"] / (c["pc"] * p.delta)
    xb[..., I_L] += bU * (c["U"] / L - c["pc_pow"])

    # current-step output feeding capital
    g = _flow_terms_vjp(c["now"], x[..., I_T_AT], x[..., I_K], x[..., I_SIGMA], L, x[..., I_A],
                        x[..., I_MU], x[..., I_S], p, bQ=bQ, bE=0.0, bC=0.0)
    xb[..., I_T_AT] += g["T_AT"]
    xb[..., I_K] += g["K"]
    xb[..., I_SIGMA] += g["sig"]
    xb[..., I_L] += g["L"]
    xb[..., I_A] += g["A"]
    xb[..., I_MU] += g["mu"]

    # carbon
    xb[..., I_M_AT] += p.zeta11 * b_MAT + p.zeta21 * b_MUP
    xb[..., I_M_UP] += p.zeta12 * b_MAT + p.zeta22 * b_MUP + p.zeta32 * b_MLO
    xb[..., I_M_LO] += p.zeta23 * b_MUP + p.zeta33 * b_MLO
    xb[..., I_E] += p.xi2 * b_MAT

    # climate
    xb[..., I_T_AT] += p.phi11 * b_TAT + p.phi21 * b_TLO
    xb[..., I_T_LO] += p.phi12 * b_TAT + p.phi22 * b_TLO
    bF = p.xi1 * b_TAT
    xb[..., I_M_AT] += p.eta / (dynamics.LOG2 * x[..., I_M_AT]) * bF
    xb[..., I_F_EX] += bF
    return xb, wb


def _initial_targets(x: np.ndarray, p: ParameterSet) -> Tuple[float, float]:
    """x13(1) and x14(1) implied by the other step-1 components."""
    ft = _flow_terms(x[I_T_AT], x[I_K], x[I_SIGMA], x[I_L], x[I_A], x[I_E_LAND],
                     x[I_MU], x[I_S], np.rint(x[I_INDEX]), p)
    return float(ft["E"]), float(ft["C"])


def _initial_targets_vjp(x: np.ndarray, bE: float, bC: float, p: ParameterSet) -> np.ndarray:
    i = np.rint(x[I_INDEX])
    ft = _flow_terms(x[I_T_AT], x[I_K], x[I_SIGMA], x[I_L], x[I_A], x[I_E_LAND], x[I_MU], x[I_S], i, p)
    g = _flow_terms_vjp(ft, x[I_T_AT], x[I_K], x[I_SIGMA], x[I_L], x[I_A], x[I_MU], x[I_S], p,
                        bQ=0.0, bE=bE, bC=bC)
    out = np.zeros(N_STATES)
    for k, name in ((I_T_AT, "T_AT"), (I_K, "K"), (I_SIGMA, "sig"), (I_L, "L"), (I_A, "A"),
                    (I_E_LAND, "EL"), (I_MU, "mu"), (I_S, "s")):
        out[k] = g[name]
    return out


def initial_augmented_state(p: ParameterSet, mu1: float, s1: float) -> AugmentedState:
    """Base-year augmented state; x13 and x14 follow from (mu1, s1)."""
    for name, value in (("mu1", mu1), ("s1", s1)):
        if not 0.0 <= value <= 1.0:
            raise DomainError(f"{name} must lie in [0, 1], got {value}", step=1, component=name)
    x = np.zeros(N_STATES)
    x[I_INDEX] = 1.0
    x[I_T_AT], x[I_T_LO] = p.T_AT0, p.T_LO0
    x[I_M_AT], x[I_M_UP], x[I_M_LO] = p.M_AT0, p.M_UP0, p.M_LO0
    x[I_K] = p.K0
    x[I_SIGMA] = p.sigma0
    x[I_L] = p.L0
    x[I_A] = p.A0
    x[I_E_LAND] = p.E_L0
    x[I_F_EX] = forcing_exo(1, p.f0, p.f1, p.tf)
    x[I_MU], x[I_S] = mu1, s1
    x[I_E], x[I_C] = _initial_targets(x, p)
    x[I_W] = 0.0
    return x


def rollout(x1: AugmentedState, inputs: np.ndarray, p: ParameterSet) -> np.ndarray:
    """Simulate x(1..N+1) from x(1) under inputs w(1..N); returns shape (N+1, 17)."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, N_INPUTS)
    X = np.empty((inputs.shape[0] + 1, N_STATES))
    X[0] = x1
    for j in range(inputs.shape[0]):
        X[j + 1] = augmented_step(X[j], inputs[j], p)
    return X


def adjoint_sweep(X: np.ndarray, W: np.ndarray, gX: np.ndarray, gW: np.ndarray,
                  p: ParameterSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Reverse sweep along a rolled-out trajectory.

    Args:
        X: States, shape (N+1, 17)
        W: Inputs, shape (N, 2)
        gX: Gradient of a scalar with respect to each state (physical units)
        gW: Gradient with respect to each input

    Returns:
        (a, gradW): a[j] is the total derivative with respect to an injection
        into x(j+1) (0-based j), which is also the multiplier of the dynamics
        row defining it; gradW is the total derivative with respect to w.
    """
    N = W.shape[0]
    a = np.zeros_like(gX)
    gradW = np.array(gW, dtype=float, copy=True)
    a[N] = gX[N]
    for j in range(N - 1, -1, -1):
        xb, wb = augmented_step_vjp(X[j], W[j], a[j + 1], p)
        gradW[j] += wb
        a[j] = gX[j] + xb
    return a, gradW


# ---------------------------------------------------------------------------
# problem options
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OcpSpec:
    """
    Options of one finite-horizon welfare problem.

    mode "ocp1" leaves mu(1), s(1) free (unless fix_mu1) and pins the rest of
    x(1) to the base year; mode "ocp2" pins all of x(1) to ``x_init``.
    """

    params: ParameterSet
    horizon: int
    mode: str = "ocp1"
    x_init: Optional[np.ndarray] = None
    fix_mu1: bool = False
    T_max: Optional[float] = None
    rate_bound: Optional[float] = None
    growth_bound: Optional[float] = None
    savings_tail: Optional[Tuple[int, float]] = None
    rho: Optional[float] = None
    scaled_objective: bool = True

    def check(self) -> None:
        if self.mode not in ("ocp1", "ocp2"):
            raise ProblemError(f"unknown initial-condition mode '{self.mode}'")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ProblemError(f"horizon must be a positive integer, got {self.horizon}")
        if self.mode == "ocp2":
            if self.x_init is None or np.shape(self.x_init) != (N_STATES,):
                raise ProblemError("ocp2 needs a 17-component x_init")
        elif self.x_init is not None:
            raise ProblemError("ocp1 takes no x_init; use mode='ocp2' to pin x(1)")
        if self.T_max is not None and not self.T_max > 0:
            raise ProblemError(f"T_max must be positive, got {self.T_max}")
        for name in ("rate_bound", "growth_bound"):
            value = getattr(self, name)
            if value is None:
                continue
            if name == "rate_bound" and value < 0:
                raise ProblemError(f"rate_bound must be nonnegative, got {value}")
            if name == "growth_bound" and not value > 0:
                raise ProblemError(f"growth_bound must be positive, got {value}")
            if self.mode == "ocp1" and not self.fix_mu1:
                raise ProblemError(f"{name} needs fix_mu1 so that the constraint is defined at the first step")
        if self.savings_tail is not None:
            length, value = self.savings_tail
            if not 0 <= length <= self.horizon:
                raise ProblemError(f"savings tail length must lie in [0, {self.horizon}], got {length}")
            if not 0.0 <= value < 1.0:
                raise ProblemError(f"savings tail value must lie in [0, 1), got {value}")
        if self.rho is not None and not self.rho > 0:
            raise ProblemError(f"rho must be positive, got {self.rho}")

    def effective_params(self) -> ParameterSet:
        p = self.params
        if self.rho is not None:
            p = p.with_overrides(rho=float(self.rho))
        if not self.scaled_objective:
            p = p.with_overrides(scale1=1.0, scale2=0.0)
        return p


# ---------------------------------------------------------------------------
# NLP
# ---------------------------------------------------------------------------

class NlpProblem:
    """
    Transcribed welfare problem in scaled variables z = x / scale.

    Implements the model interface used by dice_mpc.nlp (lower, upper, x0,
    evaluate) plus structure the solver exploits: a condensed input-only
    form and multiplier estimation by backward substitution.
    """

    def __init__(self, spec: OcpSpec):
        spec.check()
        self.spec = spec
        self.params = p = spec.effective_params()
        self.N = N = int(spec.horizon)

        pinned = np.ones(N_STATES, dtype=bool)
        if spec.mode == "ocp1":
            pinned[I_MU] = spec.fix_mu1
            pinned[I_S] = False
        self.pinned = pinned
        self.pinned_idx = np.flatnonzero(pinned)
        self.free_idx = np.flatnonzero(~pinned)
        self.nonlinear_pins = spec.mode == "ocp1"

        if spec.mode == "ocp1":
            self.x_template = initial_augmented_state(p, p.mu0, INITIAL_SAVINGS)
        else:
            self.x_template = np.array(spec.x_init, dtype=float)

        self.n_x = (N + 1) * N_STATES
        self.n = self.n_x + N * N_INPUTS

        X0, W0 = self._initial_guess()
        self.state_scale = scale = np.ones(N_STATES)
        for k in range(N_STATES):
            if k not in (I_MU, I_S):
                scale[k] = max(1.0, float(np.max(np.abs(X0[:, k]))))

        self.W_ref = float(X0[N, I_W])
        self.objective_scale = 1.0
        gX = np.zeros_like(X0)
        gX[N, I_W] = p.scale1
        _, b, gradW = self._backsubstitute_physical(X0, W0, gX, np.zeros_like(W0))
        grad_inf = max(float(np.max(np.abs(gradW))) if gradW.size else 0.0,
                       float(np.max(np.abs(b[self.free_idx] * scale[self.free_idx]))) if self.free_idx.size else 0.0)
        self.objective_scale = grad_inf if grad_inf > 1e-12 else 1.0

        self._build_bounds(X0)
        self._build_inequalities()
        self.x0 = self.pack(X0, W0)

        self.eq_tags: List[Tuple[int, int]] = [(1, int(k)) for k in self.pinned_idx]
        self.eq_tags += [(j + 1, k) for j in range(1, N + 1) for k in range(N_STATES)]
        self.n_pins = int(self.pinned_idx.size)
        logger.debug(f"Built {spec.mode} problem: N={N}, n={self.n}, eq={len(self.eq_tags)}, "
                     f"ineq={self.A_ineq.shape[0]}")

    # -- layout -------------------------------------------------------------

    def pack(self, X: np.ndarray, W: np.ndarray) -> np.ndarray:
        return np.concatenate([(X / self.state_scale).ravel(), np.asarray(W, dtype=float).ravel()])

    def unpack(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        X = z[:self.n_x].reshape(self.N + 1, N_STATES) * self.state_scale
        W = z[self.n_x:].reshape(self.N, N_INPUTS)
        return X, W

    to_physical = unpack

    def state_slot(self, step: int, comp: int) -> int:
        """Position of x_comp(step) in z."""
        return (step - 1) * N_STATES + comp

    def input_slot(self, step: int, k: int) -> int:
        return self.n_x + (step - 1) * N_INPUTS + k

    # -- construction helpers ------------------------------------------------

    def _initial_state(self, free_values: np.ndarray) -> np.ndarray:
        x1 = self.x_template.copy()
        x1[self.free_idx] = free_values
        if self.nonlinear_pins:
            x1[I_E], x1[I_C] = _initial_targets(x1, self.params)
        return x1

    def _initial_guess(self) -> Tuple[np.ndarray, np.ndarray]:
        N = self.N
        mu_path = np.linspace(self.x_template[I_MU], 1.0, N + 1)
        s_path = np.full(N + 1, INITIAL_SAVINGS)
        s_path[0] = self.x_template[I_S]
        if self.spec.savings_tail is not None:
            length, value = self.spec.savings_tail
            if length:
                s_path[N + 1 - length:] = value
        W = np.column_stack([mu_path[1:], s_path[1:]])
        x1 = self._initial_state(np.array([mu_path[0], s_path[0]])[self.free_idx - I_MU])
        return rollout(x1, W, self.params), W

    def _build_bounds(self, X0: np.ndarray) -> None:
        N = self.N
        lo = np.full((N + 1, N_STATES), -np.inf)
        hi = np.full((N + 1, N_STATES), np.inf)
        for k in POSITIVE_STATES:
            lo[:, k] = POSITIVITY_FRACTION * abs(X0[0, k])
        for k in (I_MU, I_S):
            lo[:, k], hi[:, k] = 0.0, 1.0
            if self.pinned[k]:
                lo[0, k], hi[0, k] = -np.inf, np.inf
        w_lo = np.zeros((N, N_INPUTS))
        w_hi = np.ones((N, N_INPUTS))
        if self.spec.savings_tail is not None:
            length, value = self.spec.savings_tail
            for j in range(N + 1 - length, N + 1):
                lo[j, I_S] = hi[j, I_S] = value
                w_lo[j - 1, 1] = w_hi[j - 1, 1] = value
        self.lower = np.concatenate([(lo / self.state_scale).ravel(), w_lo.ravel()])
        self.upper = np.concatenate([(hi / self.state_scale).ravel(), w_hi.ravel()])

    def _build_inequalities(self) -> None:
        spec, N = self.spec, self.N
        rows, cols, vals, rhs, tags = [], [], [], [], []

        def add_row(entries, bound, tag):
            r = len(rhs)
            for col, val in entries:
                rows.append(r)
                cols.append(col)
                vals.append(val)
            rhs.append(bound)
            tags.append(tag)

        if spec.T_max is not None:
            s_T = self.state_scale[I_T_AT]
            for j in range(1, N + 2):
                add_row([(self.state_slot(j, I_T_AT), 1.0)], spec.T_max / s_T, ("T_max", j))
        if spec.rate_bound is not None:
            for j in range(1, N + 1):
                a, b = self.state_slot(j, I_MU), self.state_slot(j + 1, I_MU)
                add_row([(b, 1.0), (a, -1.0)], spec.rate_bound, ("rate_up", j))
                add_row([(a, 1.0), (b, -1.0)], spec.rate_bound, ("rate_down", j))
        if spec.growth_bound is not None:
            for j in range(1, N + 1):
                a, b = self.state_slot(j, I_MU), self.state_slot(j + 1, I_MU)
                add_row([(b, 1.0), (a, -(1.0 + spec.growth_bound))], 0.0, ("growth", j))

        self.A_ineq = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), self.n))
        self.b_ineq = np.array(rhs, dtype=float)
        self.ineq_tags = tags
        self.ineq_scale = np.array([self.state_scale[I_T_AT] if t[0] == "T_max" else 1.0 for t in tags])

    # -- evaluation ------------------------------------------------------------

    def _objective(self, X: np.ndarray) -> float:
        return self.params.scale1 * (X[self.N, I_W] - self.W_ref) / self.objective_scale

    def _objective_gradient(self) -> np.ndarray:
        g = np.zeros(self.n)
        g[self.state_slot(self.N + 1, I_W)] = (self.params.scale1 * self.state_scale[I_W]
                                               / self.objective_scale)
        return g

    def physical_objective(self, z: np.ndarray) -> float:
        X, _ = self.unpack(z)
        return self.params.scale1 * X[self.N, I_W] + self.params.scale2

    def _pin_targets(self, x1: np.ndarray) -> np.ndarray:
        t = self.x_template.copy()
        if self.nonlinear_pins:
            t[I_E], t[I_C] = _initial_targets(x1, self.params)
        return t

    def equality_residuals(self, z: np.ndarray) -> np.ndarray:
        X, W = self.unpack(z)
        p, s = self.params, self.state_scale
        dyn = (augmented_step(X[:-1], W, p) - X[1:]) / s
        pins = ((self._pin_targets(X[0]) - X[0]) / s)[self.pinned_idx]
        return np.concatenate([pins, dyn.ravel()])

    def inequality_values(self, z: np.ndarray) -> np.ndarray:
        return self.A_ineq @ z - self.b_ineq

    def evaluate(self, z: np.ndarray) -> Evaluation:
        """Objective, residuals and derivative actions at scaled point z."""
        z = np.asarray(z, dtype=float)
        X, W = self.unpack(z)
        p, s, N = self.params, self.state_scale, self.N
        m_p = self.n_pins

        def vjp(obj_weight: float, eq_cot: np.ndarray, ineq_cot: np.ndarray) -> np.ndarray:
            g = obj_weight * self._objective_gradient()
            if ineq_cot.size:
                g += self.A_ineq.T @ ineq_cot
            cd = eq_cot[m_p:].reshape(N, N_STATES) / s
            xb, wb = augmented_step_vjp(X[:-1], W, cd, p)
            gX = np.zeros((N + 1, N_STATES))
            gX[:-1] += xb
            gX[1:] -= cd
            cp = np.zeros(N_STATES)
            cp[self.pinned_idx] = eq_cot[:m_p] / s[self.pinned_idx]
            gX[0] -= cp
            if self.nonlinear_pins:
                gX[0] += _initial_targets_vjp(X[0], cp[I_E], cp[I_C], p)
            g[:self.n_x] += (gX * s).ravel()
            g[self.n_x:] += wb.ravel()
            return g

        blocks: Dict[str, np.ndarray] = {}

        def jvp(dz: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
            if not blocks:
                blocks.update(self._jacobian_blocks(X, W))
            dX = dz[:self.n_x].reshape(N + 1, N_STATES) * s
            dW = dz[self.n_x:].reshape(N, N_INPUTS)
            df = (np.einsum("jkl,jl->jk", blocks["Gx"], dX[:-1])
                  + np.einsum("jkl,jl->jk", blocks["Gw"], dW))
            dyn = (df - dX[1:]) / s
            dt = np.zeros(N_STATES)
            if self.nonlinear_pins:
                dt[I_E] = blocks["t13"] @ dX[0]
                dt[I_C] = blocks["t14"] @ dX[0]
            pins = ((dt - dX[0]) / s)[self.pinned_idx]
            return np.concatenate([pins, dyn.ravel()]), self.A_ineq @ dz

        return Evaluation(
            objective=self._objective(X),
            eq=self.equality_residuals(z),
            ineq=self.inequality_values(z),
            vjp=vjp,
            jvp=jvp,
        )

    def _jacobian_blocks(self, X: np.ndarray, W: np.ndarray) -> Dict[str, np.ndarray]:
        """Dense per-step Jacobians of f, one reverse sweep per output component."""
        N, p = self.N, self.params
        Gx = np.zeros((N, N_STATES, N_STATES))
        Gw = np.zeros((N, N_STATES, N_INPUTS))
        for k in range(N_STATES):
            ct = np.zeros((N, N_STATES))
            ct[:, k] = 1.0
            xb, wb = augmented_step_vjp(X[:-1], W, ct, p)
            Gx[:, k, :] = xb
            Gw[:, k, :] = wb
        out = {"Gx": Gx, "Gw": Gw}
        if self.nonlinear_pins:
            out["t13"] = _initial_targets_vjp(X[0], 1.0, 0.0, p)
            out["t14"] = _initial_targets_vjp(X[0], 0.0, 1.0, p)
        return out

    # -- structure used by the solver -----------------------------------------

    def _backsubstitute_physical(self, X, W, gX, gW):
        """Adjoint sweep plus the step-1 pin rows; returns (a, b, gradW)."""
        a, gradW = adjoint_sweep(X, W, gX, gW, self.params)
        b = a[0].copy()
        if self.nonlinear_pins:
            b += _initial_targets_vjp(X[0], a[0][I_E], a[0][I_C], self.params)
        return a, b, gradW

    def _backsubstitute(self, z: np.ndarray, gz: np.ndarray):
        X, W = self.unpack(z)
        s = self.state_scale
        gX = gz[:self.n_x].reshape(self.N + 1, N_STATES) / s
        gW = gz[self.n_x:].reshape(self.N, N_INPUTS)
        return X, W, self._backsubstitute_physical(X, W, gX, gW)

    def eq_multiplier_estimate(self, z: np.ndarray, ineq_mult: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Equality multipliers that make the Lagrangian stationary in every
        state component, by backward substitution over the dynamics rows.
        """
        gz = self._objective_gradient()
        if ineq_mult is not None and ineq_mult.size:
            gz = gz - self.A_ineq.T @ ineq_mult
        _, _, (a, b, _) = self._backsubstitute(z, gz)
        s = self.state_scale
        pins = (b * s)[self.pinned_idx]
        dyn = a[1:] * s
        return np.concatenate([pins, dyn.ravel()])

    def condensed(self) -> "CondensedProblem":
        return CondensedProblem(self)

    def multipliers_to_physical(self, eq_mult: np.ndarray, ineq_mult: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Convert scaled multipliers to derivatives of scale1 * W with respect to row injections."""
        s = self.state_scale
        row_scale = np.concatenate([s[self.pinned_idx], np.tile(s, self.N)])
        eq_phys = self.objective_scale * eq_mult / row_scale
        ineq_phys = self.objective_scale * ineq_mult / self.ineq_scale if ineq_mult.size else ineq_mult
        return eq_phys, ineq_phys

    def lambda_series(self, eq_phys: np.ndarray, comp: int) -> np.ndarray:
        """Multipliers of rows defining x_comp(j) for j = 1..N+1 (NaN where x(1) is free)."""
        out = np.full(self.N + 1, np.nan)
        pin_pos = np.flatnonzero(self.pinned_idx == comp)
        if pin_pos.size:
            out[0] = eq_phys[pin_pos[0]]
        dyn = eq_phys[self.n_pins:].reshape(self.N, N_STATES)
        out[1:] = dyn[:, comp]
        return out

    def describe(self) -> Dict[str, object]:
        spec = self.spec
        return {
            "mode": spec.mode, "horizon": self.N, "vintage": self.params.vintage.value,
            "t0": self.params.t0, "delta": self.params.delta,
            "rho": self.params.rho, "fix_mu1": spec.fix_mu1, "T_max": spec.T_max,
            "rate_bound": spec.rate_bound, "growth_bound": spec.growth_bound,
            "savings_tail": list(spec.savings_tail) if spec.savings_tail else None,
            "variables": self.n, "equalities": len(self.eq_tags), "inequalities": int(self.A_ineq.shape[0]),
        }

    # -- reporting -------------------------------------------------------------

    def dump_residuals(self, z: np.ndarray) -> str:
        """Plain-text rows 'eq step=<j> comp=<k> residual=<r>' with 1-based comp."""
        lines = [f"eq step={step} comp={comp + 1} residual={r:.10g}"
                 for (step, comp), r in zip(self.eq_tags, self.equality_residuals(z))]
        for (kind, step), h in zip(self.ineq_tags, self.inequality_values(z)):
            lines.append(f"ineq {kind} step={step} value={h:.10g}")
        return "\n".join(lines) + "\n"

    def trajectory(self, z: np.ndarray) -> Dict[str, np.ndarray]:
        """Per-step physical table (rates per year) of a decision vector."""
        X, _ = self.unpack(z)
        return trajectory_table(X, self.params)


def trajectory_table(X: np.ndarray, p: ParameterSet) -> Dict[str, np.ndarray]:
    """Physical columns for states X (n, 17) using each state's own mu and s."""
    i = np.rint(X[:, I_INDEX])
    ft = _flow_terms(X[:, I_T_AT], X[:, I_K], X[:, I_SIGMA], X[:, I_L], X[:, I_A], X[:, I_E_LAND],
                     X[:, I_MU], X[:, I_S], i, p)
    table = {
        "step": i.astype(int),
        "year": p.t0 + p.delta * (i - 1.0),
    }
    for name, k in (("T_AT", I_T_AT), ("T_LO", I_T_LO), ("M_AT", I_M_AT), ("M_UP", I_M_UP),
                    ("M_LO", I_M_LO), ("K", I_K), ("L", I_L), ("A", I_A), ("sigma", I_SIGMA),
                    ("mu", I_MU), ("s", I_S)):
        table[name] = X[:, k]
    table["Y"] = ft["Y"]
    table["Q"] = ft["Q"]
    table["E"] = X[:, I_E] / p.delta
    table["C"] = X[:, I_C] / p.delta
    table["I"] = ft["Q"] * X[:, I_S]
    table["damages_factor"] = ft["Om"]
    return table


class CondensedProblem:
    """
    Input-only form of an NlpProblem: states follow from a rollout, so the
    dynamics and pin rows hold by construction and only the inequality rows
    remain. Gradients come from one adjoint sweep.
    """

    def __init__(self, problem: NlpProblem):
        self.problem = prob = problem
        N = prob.N
        self.n_free = int(prob.free_idx.size)
        self.n = self.n_free + N * N_INPUTS
        self._free_slots = np.array([prob.state_slot(1, int(k)) for k in prob.free_idx], dtype=int)

        lower = np.concatenate([prob.lower[self._free_slots], prob.lower[prob.n_x:]])
        upper = np.concatenate([prob.upper[self._free_slots], prob.upper[prob.n_x:]])
        is_s = np.concatenate([prob.free_idx == I_S, np.tile([False, True], N)])
        upper[is_s] = np.maximum(lower[is_s], np.minimum(upper[is_s], SAVINGS_CEILING))
        self.lower, self.upper = lower, upper
        self.x0 = np.clip(self.restrict(prob.x0), lower, upper)

    def restrict(self, z: np.ndarray) -> np.ndarray:
        return np.concatenate([z[self._free_slots], z[self.problem.n_x:]])

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Full scaled decision vector obtained by rolling out from u."""
        prob = self.problem
        free_phys = u[:self.n_free] * prob.state_scale[prob.free_idx]
        W = u[self.n_free:].reshape(prob.N, N_INPUTS)
        X = rollout(prob._initial_state(free_phys), W, prob.params)
        return prob.pack(X, W)

    def evaluate(self, u: np.ndarray) -> Evaluation:
        prob = self.problem
        z = self.expand(np.asarray(u, dtype=float))
        X, _ = prob.unpack(z)

        def vjp(obj_weight: float, eq_cot: np.ndarray, ineq_cot: np.ndarray) -> np.ndarray:
            gz = obj_weight * prob._objective_gradient()
            if ineq_cot.size:
                gz = gz + prob.A_ineq.T @ ineq_cot
            return self.reduced_gradient(z, gz)

        return Evaluation(
            objective=prob._objective(X),
            eq=np.zeros(0),
            ineq=prob.inequality_values(z),
            vjp=vjp,
        )

    def reduced_gradient(self, z: np.ndarray, gz: np.ndarray) -> np.ndarray:
        prob = self.problem
        _, _, (_, b, gradW) = prob._backsubstitute(z, gz)
        free = prob.free_idx
        return np.concatenate([b[free] * prob.state_scale[free], gradW.ravel()])


# ---------------------------------------------------------------------------
# public builders
# ---------------------------------------------------------------------------

def build_ocp1(spec: OcpSpec) -> NlpProblem:
    """Welfare problem with mu(1), s(1) free and the rest of x(1) at the base year."""
    if spec.mode != "ocp1":
        raise ProblemError("build_ocp1 needs an ocp1 spec")
    return NlpProblem(spec)


def build_ocp2(spec: OcpSpec, x_init: AugmentedState) -> NlpProblem:
    """Welfare problem with all of x(1) pinned to x_init."""
    spec = dataclasses.replace(spec, mode="ocp2", x_init=np.array(x_init, dtype=float))
    return NlpProblem(spec)


def add_temperature_cap(prob: NlpProblem, T_max: float) -> NlpProblem:
    return NlpProblem(dataclasses.replace(prob.spec, T_max=T_max))


def add_rate_bound(prob: NlpProblem, delta_mu: float) -> NlpProblem:
    return NlpProblem(dataclasses.replace(prob.spec, rate_bound=delta_mu))


def add_growth_bound(prob: NlpProblem, gamma_mu: float) -> NlpProblem:
    return NlpProblem(dataclasses.replace(prob.spec, growth_bound=gamma_mu))


def add_savings_tail(prob: NlpProblem, length: int, value: float) -> NlpProblem:
    tail = (int(length), float(value)) if length else None
    return NlpProblem(dataclasses.replace(prob.spec, savings_tail=tail))


def initial_guess(spec: OcpSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Default starting trajectory: mu ramps to 1, s = 0.25, states by rollout."""
    return NlpProblem(spec)._initial_guess()
