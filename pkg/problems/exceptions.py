"""
Numeric failure types raised by oracles and solvers.

Configuration mistakes are reported with django's ValidationError; the
classes here signal that the numbers themselves went wrong.
"""


class InconsistentOracleError(ValueError):
    """A positive violation came with a zero (sub)gradient, or a nonzero
    residual maps to a zero image, so no step can reduce it."""


class IterateDivergedError(ArithmeticError):
    """An iterate contains NaN or Inf."""

    def __init__(self, iteration, message=None):
        self.iteration = iteration
        super().__init__(message or f"Iterate became non-finite at iteration {iteration}")


class OracleFailure(RuntimeError):
    """A reference oracle exhausted its iteration cap."""
