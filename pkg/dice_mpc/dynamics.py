"""
One-step endogenous dynamics and derived economic and geophysical flows.

Every function accepts scalars or numpy arrays and broadcasts.
"""

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import DomainError
from .params import ParameterSet

LOG2 = math.log(2.0)


@dataclass(frozen=True)
class EndogenousState:
    T_AT: float
    T_LO: float
    M_AT: float
    M_UP: float
    M_LO: float
    K: float

    @classmethod
    def initial(cls, p: ParameterSet) -> "EndogenousState":
        return cls(p.T_AT0, p.T_LO0, p.M_AT0, p.M_UP0, p.M_LO0, p.K0)

    @property
    def T(self) -> np.ndarray:
        return np.array([self.T_AT, self.T_LO])

    @property
    def M(self) -> np.ndarray:
        return np.array([self.M_AT, self.M_UP, self.M_LO])


@dataclass(frozen=True)
class Controls:
    mu: float
    s: float

    def __post_init__(self):
        for name in ("mu", "s"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise DomainError(f"{name} must lie in [0, 1], got {value}", component=name)


@dataclass(frozen=True)
class Flows:
    """Rates over one step: output in trillion USD/yr, emissions in GtCO2/yr."""

    Y: float
    Q: float
    E: float
    C: float
    I: float
    F: float
    U: float
    Omega: float


def gross_output(A, K, L, gamma):
    """Cobb-Douglas output with labor in billions."""
    return A * np.power(K, gamma) * np.power(np.asarray(L) / 1000.0, 1.0 - gamma)


def damages_factor(T_AT, a2, a3):
    """Retained output fraction 1/(1 + a2 |T_AT|^a3)."""
    return 1.0 / (1.0 + a2 * np.power(np.abs(T_AT), a3))


def abatement_factor(theta1_i, mu, theta2):
    return 1.0 - theta1_i * np.power(mu, theta2)


def net_output(Y, T_AT, theta1_i, mu, p: ParameterSet):
    return damages_factor(T_AT, p.a2, p.a3) * abatement_factor(theta1_i, mu, p.theta2) * Y


def emissions_rate(sigma_i, mu, Y, E_Land_i):
    return sigma_i * (1.0 - mu) * Y + E_Land_i


def radiative_forcing(M_AT, F_EX_i, eta, M_AT_1750):
    M_AT = np.asarray(M_AT, dtype=float)
    if np.any(M_AT <= 0):
        raise DomainError("atmospheric carbon must be positive for the forcing logarithm", component="M_AT")
    return eta * np.log(M_AT / M_AT_1750) / LOG2 + F_EX_i


def climate_step(T, F, phi_T, xi1) -> np.ndarray:
    """Causal two-layer update T' = phi_T T + [xi1 F, 0]."""
    T_next = np.asarray(phi_T) @ np.asarray(T, dtype=float)
    T_next[0] += xi1 * F
    return T_next


def carbon_step(M, E, phi_M, xi2, delta) -> np.ndarray:
    """Three-reservoir update; E is the annual emission rate in GtCO2/yr."""
    M_next = np.asarray(phi_M) @ np.asarray(M, dtype=float)
    M_next[0] += xi2 * delta * E
    return M_next


def capital_step(K, Q, s, delta_K, delta):
    return (1.0 - delta_K) ** delta * K + delta * Q * s


def consumption(Q, s):
    return Q * (1.0 - s)


def utility(C, L, alpha):
    """
    Population-weighted CRRA utility of per-capita consumption 1000 C / L.

    Args:
        C: Consumption, trillion USD/yr
        L: Population, millions
        alpha: Elasticity of marginal utility (alpha == 1 gives L ln c)

    Returns:
        Utility in utils
    """
    C = np.asarray(C, dtype=float)
    L = np.asarray(L, dtype=float)
    if np.any(C <= 0):
        raise DomainError("consumption must be positive for utility", component="C")
    if np.any(L <= 0):
        raise DomainError("population must be positive for utility", component="L")
    log_c = np.log(1000.0 * C / L)
    if alpha == 1.0:
        return L * log_c
    return L * np.expm1((1.0 - alpha) * log_c) / (1.0 - alpha)


def marginal_utility(C, L, alpha):
    """dU/dC at consumption rate C."""
    c = 1000.0 * np.asarray(C, dtype=float) / np.asarray(L, dtype=float)
    return 1000.0 * np.power(c, -alpha)


def discount_factor(i, rho, delta):
    """(1 + rho)^(-delta (i - 1)) for 1-based step i."""
    return np.power(1.0 + rho, -delta * (np.asarray(i, dtype=float) - 1.0))


def welfare_objective(C_path, L_path, rho, delta, scale1, scale2, p: ParameterSet):
    """scale2 + scale1 * sum of discounted utilities, first entry undiscounted; alpha comes from p."""
    C_path = np.asarray(C_path, dtype=float)
    L_path = np.asarray(L_path, dtype=float)
    if C_path.shape != L_path.shape:
        raise ValueError(f"path lengths differ: {C_path.shape} vs {L_path.shape}")
    steps = np.arange(1, C_path.size + 1)
    total = np.sum(utility(C_path, L_path, p.alpha) * discount_factor(steps, rho, delta))
    return scale2 + scale1 * total


def build_climate_matrices(C_AT: float, C_LO: float, lam: float, gamma_heat: float,
                           delta: float) -> Tuple[np.ndarray, float]:
    """
    Euler-discretized two-layer energy balance model.

    Args:
        C_AT: Atmosphere/upper-ocean heat capacity
        C_LO: Deep-ocean heat capacity
        lam: Climate feedback parameter (F_2x / ECS)
        gamma_heat: Heat exchange coefficient between the layers
        delta: Step length in years

    Returns:
        (phi_T, xi1)
    """
    if C_AT <= 0 or C_LO <= 0 or delta <= 0:
        raise DomainError("heat capacities and step length must be positive")
    if lam < 0 or gamma_heat < 0:
        raise DomainError("feedback and heat exchange must be nonnegative")
    if delta / C_AT * (lam + gamma_heat) >= 1.0:
        raise DomainError(f"unstable discretization: delta/C_AT (lambda + gamma) = "
                          f"{delta / C_AT * (lam + gamma_heat):g} >= 1")

    phi_T = np.array([
        [1.0 - delta / C_AT * (lam + gamma_heat), delta * gamma_heat / C_AT],
        [delta * gamma_heat / C_LO, 1.0 - delta * gamma_heat / C_LO],
    ])
    return phi_T, delta / C_AT


def equilibrium_temperature(F: float, p: ParameterSet) -> float:
    """Fixed point of the climate map under constant forcing F (equals F / lambda)."""
    return p.xi1 * F / (1.0 - p.phi11 - p.phi12)


def flows(state: EndogenousState, controls: Controls, i: int, exo: dict, p: ParameterSet) -> Flows:
    """
    All derived quantities at one step.

    Args:
        state: Endogenous state at step i
        controls: Mitigation and savings rates at step i
        i: 1-based step index
        exo: Exogenous values at step i (ExogenousPath.at(i))
        p: Parameter set

    Returns:
        Flows at step i
    """
    Y = float(gross_output(exo["A"], state.K, exo["L"], p.gamma))
    Omega = float(damages_factor(state.T_AT, p.a2, p.a3))
    Q = float(net_output(Y, state.T_AT, exo["theta1"], controls.mu, p))
    E = float(emissions_rate(exo["sigma"], controls.mu, Y, exo["E_Land"]))
    C = float(consumption(Q, controls.s))
    F = float(radiative_forcing(state.M_AT, exo["F_EX"], p.eta, p.M_AT_1750))
    U = float(utility(C, exo["L"], p.alpha)) if C > 0 else float("-inf")
    return Flows(Y=Y, Q=Q, E=E, C=C, I=Q * controls.s, F=F, U=U, Omega=Omega)


def step(state: EndogenousState, controls: Controls, i: int, exo: dict, p: ParameterSet) -> EndogenousState:
    """Advance the endogenous state from step i to i + 1."""
    f = flows(state, controls, i, exo, p)
    T = climate_step(state.T, f.F, p.phi_T, p.xi1)
    M = carbon_step(state.M, f.E, p.phi_M, p.xi2, p.delta)
    K = capital_step(state.K, f.Q, controls.s, p.delta_K, p.delta)
    return EndogenousState(T[0], T[1], M[0], M[1], M[2], float(K))
