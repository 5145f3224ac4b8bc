"""
Exogenous drivers of the DICE model.

Population, total factor productivity, emissions intensity, the abatement
cost coefficient, non-CO2 forcing and land-use emissions do not depend on
the controls, so they are generated once per horizon.
"""

import csv
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .errors import DomainError
from .params import ParameterSet


def population_step(L_i: float, La: float, lg: float) -> float:
    """Hassell population update."""
    if L_i <= 0:
        raise DomainError(f"population must be positive, got {L_i}", component="L")
    return L_i * ((1.0 + La) / (1.0 + L_i)) ** lg


def tfp_growth_factor(gA: float, delta_A: float, delta: float, i: int) -> float:
    """A(i+1)/A(i); raises DomainError when the denominator would flip sign."""
    g = gA * math.exp(-delta_A * delta * (i - 1))
    if g >= 1.0:
        raise DomainError(f"TFP growth term {g:g} must stay below 1", step=i, component="A")
    return 1.0 / (1.0 - g)


def tfp_step(A_i: float, gA: float, delta_A: float, delta: float, i: int) -> float:
    return A_i * tfp_growth_factor(gA, delta_A, delta, i)


def sigma_decay_factor(g_sigma: float, delta_sigma: float, delta: float, i: int) -> float:
    """sigma(i+1)/sigma(i)."""
    return math.exp(-g_sigma * (1.0 - delta_sigma) ** (delta * (i - 1)) * delta)


def sigma_step(sigma_i: float, g_sigma: float, delta_sigma: float, delta: float, i: int) -> float:
    if sigma_i <= 0:
        raise DomainError(f"emissions intensity must be positive, got {sigma_i}", step=i, component="sigma")
    return sigma_i * sigma_decay_factor(g_sigma, delta_sigma, delta, i)


def abatement_cost_coeff(sigma_i: float, pb: float, delta_pb: float, theta2: float, i: int) -> float:
    """theta1(i) = pb / (1000 theta2) (1 - delta_pb)^(i-1) sigma(i)."""
    return pb / (1000.0 * theta2) * (1.0 - delta_pb) ** (i - 1) * sigma_i


def forcing_exo(i: int, f0: float, f1: float, tf: float) -> float:
    return f0 + min(f1 - f0, (f1 - f0) / tf * (i - 1))


def land_emissions(i: int, E_L0: float, delta_EL: float) -> float:
    return E_L0 * (1.0 - delta_EL) ** (i - 1)


@dataclass(frozen=True)
class ExogenousPath:
    """Exogenous sequences; entry 0 is step index 1 (the base year)."""

    horizon: int
    t0: float
    delta: float
    L: np.ndarray
    A: np.ndarray
    sigma: np.ndarray
    theta1: np.ndarray
    F_EX: np.ndarray
    E_Land: np.ndarray

    @property
    def steps(self) -> np.ndarray:
        return np.arange(1, self.horizon + 2)

    @property
    def years(self) -> np.ndarray:
        return self.t0 + self.delta * (self.steps - 1)

    def year(self, i: int) -> float:
        return self.t0 + self.delta * (i - 1)

    def at(self, i: int) -> dict:
        """All sequences at 1-based step i."""
        k = i - 1
        return {
            "L": self.L[k], "A": self.A[k], "sigma": self.sigma[k],
            "theta1": self.theta1[k], "F_EX": self.F_EX[k], "E_Land": self.E_Land[k],
        }

    def to_csv(self, path: str, float_format: str = "%.10g") -> None:
        columns = ("L", "A", "sigma", "theta1", "F_EX", "E_Land")
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(("step", "year") + columns)
            for k, i in enumerate(self.steps):
                row = [str(int(i)), float_format % self.years[k]]
                row.extend(float_format % getattr(self, name)[k] for name in columns)
                writer.writerow(row)


def build_exogenous_path(p: ParameterSet, horizon: int) -> ExogenousPath:
    """
    Iterate the exogenous updates from the base-year values.

    Args:
        p: Parameter set
        horizon: Number of steps; every sequence has horizon + 1 entries

    Returns:
        The precomputed path
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")

    L: List[float] = [p.L0]
    A: List[float] = [p.A0]
    sigma: List[float] = [p.sigma0]
    for i in range(1, horizon + 1):
        L.append(population_step(L[-1], p.La, p.lg))
        A.append(tfp_step(A[-1], p.gA, p.delta_A, p.delta, i))
        sigma.append(sigma_step(sigma[-1], p.g_sigma, p.delta_sigma, p.delta, i))

    steps = range(1, horizon + 2)
    theta1 = [abatement_cost_coeff(s, p.pb, p.delta_pb, p.theta2, i) for s, i in zip(sigma, steps)]
    F_EX = [forcing_exo(i, p.f0, p.f1, p.tf) for i in steps]
    E_Land = [land_emissions(i, p.E_L0, p.delta_EL) for i in steps]

    return ExogenousPath(
        horizon=horizon, t0=p.t0, delta=p.delta,
        L=np.array(L), A=np.array(A), sigma=np.array(sigma),
        theta1=np.array(theta1), F_EX=np.array(F_EX), E_Land=np.array(E_Land),
    )
