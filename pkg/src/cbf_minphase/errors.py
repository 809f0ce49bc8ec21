"""Typed errors raised by the simulator kernels, filters and CLI."""

from __future__ import annotations

from typing import Optional


class CbfMinPhaseError(ValueError):
    """Base class for every error the package raises on bad input or numerics."""


class SingularMatrixError(CbfMinPhaseError):
    pass


class NoConvergenceError(CbfMinPhaseError):
    pass


class NotStabilizingError(CbfMinPhaseError):
    pass


class NonFiniteError(CbfMinPhaseError):
    pass


class NonFiniteStateError(NonFiniteError):
    pass


class InvalidGammaError(CbfMinPhaseError):
    pass


class NegativeMuError(CbfMinPhaseError):
    pass


class DegenerateConstraintError(CbfMinPhaseError):
    pass


class InfeasibleError(CbfMinPhaseError):
    pass


class NoRelativeDegreeError(CbfMinPhaseError):
    pass


class SingularCoordinatesError(CbfMinPhaseError):
    pass


class DependentColumnsError(CbfMinPhaseError):
    pass


class InvalidCertificateError(CbfMinPhaseError):
    pass


class SimulationError(CbfMinPhaseError):
    """A policy failure, tagged with the step at which it happened."""

    def __init__(self, step: int, cause: Exception):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")


class ConfigError(CbfMinPhaseError):
    """Configuration problem with optional source location or field path."""

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
        column: Optional[int] = None,
        source: Optional[str] = None,
    ):
        self.message = message
        self.field = field
        self.line = line
        self.column = column
        self.source = source
        location = []
        if source:
            location.append(source)
        if line is not None:
            location.append(f"line {line}")
            if column is not None:
                location.append(f"column {column}")
        if field:
            location.append(f"field '{field}'")
        prefix = ", ".join(location)
        super().__init__(f"{prefix}: {message}" if prefix else message)
