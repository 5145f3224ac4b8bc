"""
Configuration plumbing shared by the parameter override reader and the
scenario runner.

Two layers live here:
  - the system configuration (``config.yaml`` next to this module), loaded
    with PyYAML and falling back to built-in defaults when absent;
  - the flat ``key = value`` reader used for parameter override files and
    scenario files. Values are parsed as TOML values with tomli; anything
    that is not a valid TOML value is kept as a bare string.
"""

import copy
import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Tuple

import tomli
import yaml

from .errors import ConfigError

logger = logging.getLogger("dice_mpc.config")

SYSTEM_CONFIG_PATH = os.path.join(os.path.dirname(__file__), "config.yaml")

LOG_ENV_VAR = "DICE_MPC_LOG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

DEFAULT_SYSTEM_CONFIG: Dict[str, Any] = {
    "general": {"log_level": "info", "output_dir": "results"},
    "solver": {
        "opt_tol": 1e-6,
        "feas_tol": 1e-8,
        "max_iter": 500,
        "max_inner_iter": 5000,
        "lbfgs_memory": 20,
        "rho0": 10.0,
        "rho_max": 1e10,
        "stall_limit": 20,
        "strategy": "auto",
    },
    "scc": {
        "years": [2015, 2020, 2030],
        "pulse_size": 10.0,
        "pulse_rate": 0.05,
        "tail_steps": 100,
        "deviation_threshold": 0.10,
    },
    "search": {"resolution": 0.01},
    "output": {"float_format": "%.10g"},
}

_LEVELS = {
    "debug": logging.DEBUG,
    "info": logging.INFO,
    "warning": logging.WARNING,
    "error": logging.ERROR,
}


def load_system_config(path: Optional[str] = None) -> Dict[str, Any]:
    """
    Load the system configuration, merged over the built-in defaults.

    Args:
        path: YAML file to read (defaults to the packaged config.yaml)

    Returns:
        Nested configuration dictionary
    """
    path = path or SYSTEM_CONFIG_PATH
    merged = copy.deepcopy(DEFAULT_SYSTEM_CONFIG)
    try:
        with open(path, "rb") as f:
            loaded = yaml.safe_load(f) or {}
    except (OSError, yaml.YAMLError) as e:
        logger.warning(f"Could not load system configuration: {e}")
        return merged

    for section, values in loaded.items():
        if isinstance(values, dict):
            merged.setdefault(section, {}).update(values)
        else:
            merged[section] = values
    logger.debug(f"Loaded system configuration from {path}")
    return merged


def resolve_log_level(system_config: Mapping[str, Any],
                      environ: Optional[Mapping[str, str]] = None,
                      verbose: bool = False,
                      quiet: bool = False) -> int:
    """Pick the log level: config.yaml < DICE_MPC_LOG < command-line flags."""
    environ = os.environ if environ is None else environ
    name = str(system_config.get("general", {}).get("log_level", "info")).lower()
    env_name = environ.get(LOG_ENV_VAR)
    if env_name:
        if env_name.lower() not in _LEVELS:
            raise ConfigError(f"unknown log level '{env_name}'", key=LOG_ENV_VAR)
        name = env_name.lower()
    if verbose:
        name = "debug"
    if quiet:
        name = "warning"
    return _LEVELS.get(name, logging.INFO)


def parse_value(raw: str) -> Any:
    """Parse one right-hand side as a TOML value, or keep it as a bare string."""
    try:
        return tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        bare = raw.split(" #", 1)[0].strip()
        return bare


def parse_flat(text: str) -> Dict[str, Tuple[Any, int]]:
    """
    Parse flat ``key = value`` text.

    Args:
        text: File contents; ``#`` starts a comment line

    Returns:
        Mapping key -> (value, 1-based line number)
    """
    entries: Dict[str, Tuple[Any, int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if stripped.startswith("["):
            raise ConfigError("sections are not supported in flat files", line=lineno)
        if "=" not in stripped:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=lineno)
        if not raw:
            raise ConfigError("missing value", key=key, line=lineno)
        if key in entries:
            raise ConfigError(f"duplicate key (first set on line {entries[key][1]})", key=key, line=lineno)
        entries[key] = (parse_value(raw), lineno)
    return entries


def reject_unknown(entries: Mapping[str, Tuple[Any, int]], known: List[str]) -> None:
    """Raise ConfigError for the first key not in ``known``."""
    for key, (_, lineno) in sorted(entries.items(), key=lambda item: item[1][1]):
        if key not in known:
            raise ConfigError("unknown key", key=key, line=lineno)


def format_value(value: Any) -> str:
    """Render a value so that parse_value reads it back unchanged."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, int):
        return str(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(format_value(v) for v in value) + "]"
    text = str(value).replace("\\", "\\\\").replace('"', '\\"')
    return f'"{text}"'
