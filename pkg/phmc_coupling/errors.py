"""Structured exceptions for phmc_coupling.

Every error raised on purpose by the package derives from :class:`PhmcError` and
also from the builtin it specialises, so callers may catch either.  The CLI maps
these onto process exit codes (see :pydata:`EXIT_CODES`).
"""

from __future__ import annotations

import math

__all__ = [
    "PhmcError",
    "DimensionMismatchError",
    "RepresentationError",
    "ModeSplitError",
    "ReflectionUndefinedError",
    "IntegratorDivergenceError",
    "ConditionFailedError",
    "ConfigError",
    "BracketError",
    "UnknownPotentialError",
    "EXIT_OK",
    "EXIT_VALIDATION",
    "EXIT_CONFIG",
    "EXIT_DIVERGENCE",
]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3


class PhmcError(Exception):
    """Base class of all package errors."""


class DimensionMismatchError(PhmcError, ValueError):
    def __init__(self, what: str, expected: int, actual: int) -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class RepresentationError(PhmcError, ValueError):
    """A grid-valued vector was passed where eigen coordinates are required (or vice versa)."""


class ModeSplitError(PhmcError, ValueError):
    def __init__(self, n: int, dim: int) -> None:
        self.n = n
        self.dim = dim
        if dim < 1:
            super().__init__(f"mode split n={n} must be a positive integer")
        else:
            super().__init__(f"mode split n={n} outside 1..{dim}")


class ReflectionUndefinedError(PhmcError, ValueError):
    """Raised when the low-mode difference vanishes, so no reflection direction exists."""


class IntegratorDivergenceError(PhmcError, RuntimeError):
    def __init__(self, step: int, norm: float) -> None:
        self.step = step
        self.norm = norm
        super().__init__(f"integrator diverged at step {step} (|q| = {norm:.3e})")


class ConditionFailedError(PhmcError, ValueError):
    """A theory precondition ``lhs <= rhs`` does not hold.

    Attributes:
        condition: Short name of the inequality (e.g. ``"A0A"``).
        lhs: Evaluated left-hand side.
        rhs: Evaluated right-hand side.
    """

    def __init__(self, condition: str, lhs: float, rhs: float) -> None:
        self.condition = condition
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"condition {condition} violated: lhs={lhs:.6g} > rhs={rhs:.6g} (ratio {self.ratio:.4g})")

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return math.inf
        return self.lhs / self.rhs


class ConfigError(PhmcError, ValueError):
    def __init__(self, field: str, message: str) -> None:
        self.field = field
        super().__init__(f"{field}: {message}")


class BracketError(PhmcError, RuntimeError):
    """Step-size search could not bracket the target acceptance rate."""


class UnknownPotentialError(PhmcError, ValueError):
    def __init__(self, name: str, known: list[str]) -> None:
        self.name = name
        super().__init__(f"Unknown potential '{name}' (known: {', '.join(sorted(known))})")
