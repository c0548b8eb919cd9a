"""Exception types shared across the package.

The CLI maps these onto process exit codes: validation problems exit
with 2, instability refusals with 3 and numerical failures with 4.
"""

from __future__ import annotations


class OpinionDynError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(OpinionDynError, ValueError):
    """Invalid user input (scenario fields, file contents, CLI arguments)."""


class DimensionError(ValidationError):
    """Matrix or vector dimensions are incompatible with the operation."""


class NumericalError(OpinionDynError, RuntimeError):
    """A numerical procedure failed to produce a trustworthy result."""


class ConvergenceError(NumericalError):
    """An iteration did not converge within its budget."""

    def __init__(self, message: str, iterations: int):
        super().__init__(f"{message} (after {iterations} iterations)")
        self.iterations = iterations


class SingularOperatorError(NumericalError):
    """An operator that must be inverted is singular (or nearly so)."""


class ContractionError(NumericalError):
    """A fixed-point iteration has contraction factor >= 1."""

    def __init__(self, message: str, kappa: float):
        super().__init__(f"{message} (kappa = {kappa:.6g})")
        self.kappa = kappa


class DivergenceError(NumericalError):
    """A simulated trajectory left the guarded region."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (at step {step})")
        self.step = step


class UnstableSystemError(OpinionDynError, RuntimeError):
    """Operation requires a stable system; carries the stability report."""

    def __init__(self, message: str, report):
        super().__init__(message)
        self.report = report
