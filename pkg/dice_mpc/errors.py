"""
Exception hierarchy for the DICE MPC toolkit.

Validation of parameter sets returns data (lists of issue strings); the
classes here are raised only when a computation or a configuration cannot
proceed.
"""

from typing import Any, Optional


class DiceError(Exception):
    """Base class for every error raised by dice_mpc."""


class DomainError(DiceError, ValueError):
    """A model function was evaluated outside its mathematical domain."""

    def __init__(self, message: str, step: Optional[int] = None, component: Optional[str] = None):
        self.step = step
        self.component = component
        where = []
        if step is not None:
            where.append(f"step={step}")
        if component is not None:
            where.append(f"component={component}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class ConfigError(DiceError, ValueError):
    """A configuration or override file could not be parsed or validated."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        prefix = []
        if line is not None:
            prefix.append(f"line {line}")
        if key is not None:
            prefix.append(f"key '{key}'")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class ProblemError(DiceError, ValueError):
    """Inconsistent optimal control problem options."""


class SolverError(DiceError, RuntimeError):
    """A solve did not reach an optimal point where one was required.

    Args:
        message: Human readable description
        status: Solver status of the failing solve
        partial: Whatever was computed before the failure (e.g. a closed-loop run)
    """

    def __init__(self, message: str, status: Any = None, partial: Any = None):
        self.status = status
        self.partial = partial
        super().__init__(message)
