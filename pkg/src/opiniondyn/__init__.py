"""Mean-field opinion dynamics on correlated subjects.

Core pipeline: declare a :class:`~opiniondyn.scenario.Scenario`, assemble it
into a :class:`~opiniondyn.meanfield.DiscreteSystem`, then query transient
Gaussian-mixture states, stability, steady states, integral-equation solvers
and the finite-population Monte Carlo simulator.
"""

from .errors import (
    ContractionError,
    ConvergenceError,
    DimensionError,
    DivergenceError,
    NumericalError,
    OpinionDynError,
    SingularOperatorError,
    UnstableSystemError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ContractionError",
    "ConvergenceError",
    "DimensionError",
    "DivergenceError",
    "NumericalError",
    "OpinionDynError",
    "SingularOperatorError",
    "UnstableSystemError",
    "ValidationError",
    "__version__",
]
