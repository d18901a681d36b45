"""Exception types raised across the package."""


class EmffError(Exception):
    """Base class for all package errors."""


class SeparationTooSmall(EmffError):
    """Two dipoles are closer than the far-field model allows."""


class NotConverged(EmffError):
    """The dipole allocation solver stopped above its residual tolerance.

    The best iterate and its residual are kept so the caller can decide
    whether to use them anyway.
    """

    def __init__(self, message, pairs=None, residual=float("nan")):
        super().__init__(message)
        self.pairs = pairs
        self.residual = residual


class SaturationExceeded(EmffError):
    """An allocated dipole component is beyond the coil limit."""

    def __init__(self, message, pairs=None, residual=float("nan")):
        super().__init__(message)
        self.pairs = pairs
        self.residual = residual


class SingularConstraint(EmffError):
    """A M^-1 A^T is numerically singular."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class SingularBracketMatrix(EmffError):
    """[X, brackets] lost rank, so the bracket-extended inverse is undefined."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NonFiniteState(EmffError):
    """The integrated state picked up a NaN or Inf."""


class DegenerateState(EmffError):
    """The sampled geometry is degenerate (e.g. co-located satellites)."""


class ScenarioError(EmffError):
    """Base class for scenario file problems."""


class ParseError(ScenarioError):
    """The scenario file is not valid YAML or has the wrong shape."""


class ValidationError(ScenarioError):
    """A scenario field violates an invariant."""
