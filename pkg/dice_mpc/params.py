"""
DICE parameter sets.

Both vintages (2013R and 2016R) are compiled in. A ParameterSet is
immutable; overrides produce a new instance through ``with_overrides`` or a
flat ``key = value`` override file.
"""

import dataclasses
import hashlib
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .config import format_value, parse_flat, reject_unknown
from .errors import ConfigError, DomainError

logger = logging.getLogger("dice_mpc.params")

XI2 = 12.0 / 44.0
COLUMN_SUM_TOL = 1e-4


class Vintage(str, Enum):
    DICE2013R = "DICE2013R"
    DICE2016R = "DICE2016R"

    @classmethod
    def parse(cls, value: Any) -> "Vintage":
        """Accept 'DICE2016R', '2016R', '2016' or 2016."""
        if isinstance(value, Vintage):
            return value
        text = str(value).strip().upper()
        if not text.startswith("DICE"):
            text = "DICE" + text
        if not text.endswith("R"):
            text = text + "R"
        try:
            return cls(text)
        except ValueError:
            raise ConfigError(f"unknown vintage '{value}' (expected 2013R or 2016R)", key="vintage")


@dataclass(frozen=True)
class ParameterSet:
    """Every scalar of one DICE vintage plus the initial endogenous state."""

    vintage: Vintage
    delta: float
    t0: int
    N_default: int
    # climate
    phi11: float
    phi12: float
    phi21: float
    phi22: float
    xi1: float
    eta: float
    # carbon cycle
    zeta11: float
    zeta12: float
    zeta21: float
    zeta22: float
    zeta23: float
    zeta32: float
    zeta33: float
    xi2: float
    M_AT_1750: float
    # exogenous forcing and land use
    f0: float
    f1: float
    tf: float
    E_L0: float
    delta_EL: float
    # economy
    gamma: float
    theta2: float
    a2: float
    a3: float
    delta_K: float
    alpha: float
    rho: float
    L0: float
    La: float
    lg: float
    A0: float
    gA: float
    delta_A: float
    g_sigma: float
    delta_sigma: float
    pb: float
    delta_pb: float
    mu0: float
    e0: float
    q0: float
    scale1: float
    scale2: float
    # initial state
    T_AT0: float
    T_LO0: float
    K0: float
    M_AT0: float
    M_UP0: float
    M_LO0: float
    sigma0_table: float

    @property
    def phi_T(self) -> np.ndarray:
        return np.array([[self.phi11, self.phi12], [self.phi21, self.phi22]])

    @property
    def phi_M(self) -> np.ndarray:
        return np.array([
            [self.zeta11, self.zeta12, 0.0],
            [self.zeta21, self.zeta22, self.zeta23],
            [0.0, self.zeta32, self.zeta33],
        ])

    @property
    def phi_K(self) -> float:
        """Capital retained over one step."""
        return (1.0 - self.delta_K) ** self.delta

    @property
    def sigma0(self) -> float:
        return initial_sigma(self.e0, self.q0, self.mu0)

    def year(self, i: float) -> float:
        """Calendar year of 1-based step index i."""
        return self.t0 + self.delta * (i - 1)

    def step_of_year(self, year: float) -> int:
        """Inverse of ``year``; raises ValueError off the time grid."""
        i = (year - self.t0) / self.delta + 1
        if abs(i - round(i)) > 1e-9 or round(i) < 1:
            raise ValueError(f"year {year} is not on the {self.delta:g}-year grid starting {self.t0}")
        return int(round(i))

    def with_overrides(self, **changes: Any) -> "ParameterSet":
        return dataclasses.replace(self, **changes)


_DICE2016R = dict(
    vintage=Vintage.DICE2016R, delta=5.0, t0=2015, N_default=100,
    phi11=0.8718, phi12=0.0088, phi21=0.025, phi22=0.975, xi1=0.1005, eta=3.6813,
    zeta11=0.88, zeta12=0.196, zeta21=0.12, zeta22=0.797, zeta23=0.001465,
    zeta32=0.007, zeta33=0.99853488, xi2=XI2, M_AT_1750=588.0,
    f0=0.5, f1=1.0, tf=17.0, E_L0=2.6, delta_EL=0.115,
    gamma=0.3, theta2=2.6, a2=0.00236, a3=2.0, delta_K=0.1, alpha=1.45, rho=0.015,
    L0=7403.0, La=11500.0, lg=0.134, A0=5.115, gA=0.076, delta_A=0.005,
    g_sigma=0.0152, delta_sigma=0.001, pb=550.0, delta_pb=0.025, mu0=0.03,
    e0=35.85, q0=105.5, scale1=0.030245527, scale2=10993.704,
    T_AT0=0.85, T_LO0=0.0068, K0=223.0, M_AT0=851.0, M_UP0=460.0, M_LO0=1740.0,
    sigma0_table=0.3503,
)

_DICE2013R = dict(
    vintage=Vintage.DICE2013R, delta=5.0, t0=2010, N_default=60,
    phi11=0.8630, phi12=0.0086, phi21=0.025, phi22=0.975, xi1=0.098, eta=3.8,
    zeta11=0.912, zeta12=0.03833, zeta21=0.088, zeta22=0.9592, zeta23=0.0003375,
    zeta32=0.0025, zeta33=0.9996625, xi2=XI2, M_AT_1750=588.0,
    f0=0.25, f1=0.70, tf=18.0, E_L0=3.3, delta_EL=0.2,
    gamma=0.3, theta2=2.8, a2=0.00267, a3=2.0, delta_K=0.1, alpha=1.45, rho=0.015,
    L0=6838.0, La=10500.0, lg=0.134, A0=3.80, gA=0.079, delta_A=0.006,
    g_sigma=0.01, delta_sigma=0.001, pb=344.0, delta_pb=0.025, mu0=0.039,
    e0=33.61, q0=63.69, scale1=0.016408662, scale2=3855.106895,
    T_AT0=0.8, T_LO0=0.0068, K0=135.0, M_AT0=830.4, M_UP0=1527.0, M_LO0=10010.0,
    sigma0_table=0.5491,
)

_TABLES = {Vintage.DICE2016R: _DICE2016R, Vintage.DICE2013R: _DICE2013R}

_INT_FIELDS = ("t0", "N_default")
FIELD_NAMES: Tuple[str, ...] = tuple(f.name for f in dataclasses.fields(ParameterSet))


def load_parameter_set(vintage: Any) -> ParameterSet:
    """Return the compiled-in table for ``vintage``."""
    return ParameterSet(**_TABLES[Vintage.parse(vintage)])


def initial_sigma(e0: float, q0: float, mu0: float) -> float:
    """Base-year emissions intensity e0 / (q0 (1 - mu0))."""
    denominator = q0 * (1.0 - mu0)
    if denominator == 0.0:
        raise DomainError("initial_sigma needs q0 (1 - mu0) != 0", component="sigma0")
    return e0 / denominator


def validate(p: ParameterSet) -> List[str]:
    """
    Check the invariants of a parameter set.

    Args:
        p: Parameter set to check

    Returns:
        One "field: rule" string per violation, empty when the set is valid
    """
    issues = []

    for column, total in enumerate(p.phi_M.sum(axis=0), start=1):
        if abs(total - 1.0) > COLUMN_SUM_TOL:
            issues.append(f"phi_M column {column} sums to {total:.6g} (must be 1 within {COLUMN_SUM_TOL:g})")

    radius = float(np.max(np.abs(np.linalg.eigvals(p.phi_T))))
    if radius >= 1.0:
        issues.append(f"phi_T spectral radius {radius:.6g} ≥ 1")

    for name in ("mu0", "delta_EL", "delta_pb", "g_sigma", "delta_sigma"):
        value = getattr(p, name)
        if not 0.0 < value < 1.0:
            issues.append(f"{name}: must lie in (0, 1), got {value:g}")

    for name in ("delta", "N_default", "tf"):
        value = getattr(p, name)
        if not value > 0:
            issues.append(f"{name}: must be positive, got {value:g}")

    for name in ("q0", "L0", "La", "A0", "K0", "M_AT0", "M_UP0", "M_LO0", "M_AT_1750"):
        value = getattr(p, name)
        if not value > 0:
            issues.append(f"{name}: must be positive, got {value:g}")

    return issues


def serialize(p: ParameterSet) -> str:
    """Render ``p`` as a flat override file that parses back bit-exactly."""
    lines = [f"# DICE parameter set {p.vintage.value}"]
    for name in FIELD_NAMES:
        value = getattr(p, name)
        if name == "vintage":
            value = value.value
        lines.append(f"{name} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def _coerce(name: str, value: Any, lineno: int) -> Any:
    if name == "vintage":
        return Vintage.parse(value)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", key=name, line=lineno)
    if name in _INT_FIELDS:
        if float(value) != int(value):
            raise ConfigError(f"expected an integer, got {value!r}", key=name, line=lineno)
        return int(value)
    return float(value)


def parse_parameter_text(text: str, base: Optional[ParameterSet] = None) -> ParameterSet:
    """
    Apply a flat override text on top of ``base``.

    The text may name a vintage; its table is then used as the base.
    Unknown keys raise ConfigError naming key and line.
    """
    entries = parse_flat(text)
    reject_unknown(entries, list(FIELD_NAMES))
    values = {name: _coerce(name, value, lineno) for name, (value, lineno) in entries.items()}

    if base is None or ("vintage" in values and values["vintage"] != base.vintage):
        base = load_parameter_set(values.get("vintage", Vintage.DICE2016R))
    return dataclasses.replace(base, **values)


def load_override_file(path: str, vintage: Any = None) -> ParameterSet:
    """Read an override file and reject it if the result violates an invariant."""
    try:
        with open(path, "r") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read parameter file {path}: {e}")

    base = load_parameter_set(vintage) if vintage is not None else None
    p = parse_parameter_text(text, base)
    issues = validate(p)
    if issues:
        raise ConfigError(f"parameter file {path} fails validation: " + "; ".join(issues))
    logger.info(f"Loaded parameter overrides from {path} ({p.vintage.value})")
    return p


def digest(p: ParameterSet) -> str:
    """sha256 of the serialized set; stable across runs with identical inputs."""
    return hashlib.sha256(serialize(p).encode("utf-8")).hexdigest()


def derived_climate_inputs(p: ParameterSet) -> Dict[str, float]:
    """
    Recover the physical climate constants behind the tabulated phi_T and xi1.

    Inverts the explicit Euler discretization of the two-layer energy balance
    model. Returns heat capacities C_AT and C_LO, feedback lambda, heat
    exchange gamma_heat and the equilibrium climate sensitivity.
    """
    C_AT = p.delta / p.xi1
    gamma_heat = p.phi12 / p.xi1
    C_LO = p.delta * gamma_heat / p.phi21
    lam = (1.0 - p.phi11) / p.xi1 - gamma_heat
    return {
        "C_AT": C_AT,
        "C_LO": C_LO,
        "lambda": lam,
        "gamma_heat": gamma_heat,
        "ECS": p.eta / lam,
    }
