"""
Exception hierarchy shared by every LimeJDS module.
"""

from typing import Optional


class LimeJDSError(Exception):
    """Base class for all LimeJDS errors."""

    pass


class ConfigurationError(LimeJDSError):
    """Invalid integrator, runtime or estimator settings."""

    pass


class ValidationError(LimeJDSError):
    """A model object violates one of its construction invariants."""

    pass


class BoundaryConditionError(ValidationError):
    """Component-2 coefficients do not vanish on {x2 = 0}."""

    pass


class CoefficientShapeError(ValidationError):
    """Coefficient evaluator returned an array of the wrong shape."""

    pass


class DimensionMismatchError(ValidationError):
    """Inputs disagree on the dimensions of the system."""

    pass


class CouplingConfigError(ValidationError):
    """Coupling constants violate their admissible ranges."""

    pass


class SingularMatrixError(ValidationError):
    """A matrix that must be invertible is not."""

    pass


class GraphError(ValidationError):
    """Malformed leader-follower communication graph."""

    pass


class NoSpanningTreeError(GraphError):
    """Some follower cannot be reached from the leader."""

    pass


class DivergenceError(LimeJDSError):
    """A simulated state became non-finite or left the divergence bound."""

    def __init__(self, message: str, time: float = float("nan"), path_index: Optional[int] = None):
        super().__init__(message)
        self.time = time
        self.path_index = path_index


class NoInvariantMeasureError(DivergenceError):
    """The boundary system diverged, so no occupation measure is available."""

    pass


class RankDeficiencyError(LimeJDSError):
    """sigma1(x1, 0) has no numerically stable right inverse."""

    pass


class DegenerateJumpError(LimeJDSError):
    """A jump maps the angular state to the origin (|theta + Gamma theta| = 0)."""

    pass


class ScenarioParseError(LimeJDSError):
    """Scenario file is not well-formed."""

    pass


class ScenarioValidationError(ValidationError):
    """Scenario file is well-formed but names unknown keys or bad values."""

    pass
