"""
Exception hierarchy for SourceLoc.

Every error carries the CLI exit code of its family:
2 for configuration/precondition errors, 3 for numerical failures,
4 for file errors.
"""

from typing import Optional


class SourceLocError(Exception):
    """Base class for all SourceLoc errors."""

    exit_code = 1


# =============================================================================
# Configuration and precondition errors (exit code 2)
# =============================================================================

class ConfigError(SourceLocError):
    """Invalid configuration value or violated precondition."""

    exit_code = 2


class GeometryError(ConfigError):
    """Sensor/source geometry violates the head-model invariants."""


class ScenarioError(ConfigError):
    """Simulation scenario references invalid sources or waveforms."""


class RangeError(ConfigError):
    """A time window falls outside the recording."""


class InsufficientDataError(ConfigError):
    """Not enough samples to estimate a quantity."""


class DimensionError(ConfigError):
    """Array shapes are inconsistent."""


class PlacementError(ConfigError):
    """Fewer scout locations were found than requested."""

    def __init__(self, message: str, found: int = 0, requested: int = 0):
        super().__init__(message)
        self.found = found
        self.requested = requested


class ComparisonError(ConfigError):
    """Estimates handed to a comparison do not share geometry or timing."""


class DomainError(ConfigError):
    """A formula is evaluated outside its domain (e.g. too few vertices)."""


# =============================================================================
# Numerical errors (exit code 3)
# =============================================================================

class NumericalError(SourceLocError):
    """A numerical computation failed or produced an invalid result."""

    exit_code = 3


class ConditioningError(NumericalError):
    """Matrix too ill-conditioned for the requested regularization."""

    def __init__(self, message: str, lam: Optional[float] = None, condition: Optional[float] = None):
        super().__init__(message)
        self.lam = lam
        self.condition = condition


class NormalizationError(NumericalError):
    """dSPM noise normalization produced a non-positive variance."""


class ResolutionError(NumericalError):
    """sLORETA resolution-matrix diagonal is non-positive."""


class SingularSourceError(NumericalError):
    """A source has an all-zero lead field and cannot be depth weighted."""


class CovarianceError(NumericalError):
    """A covariance matrix is singular, indefinite or non-symmetric."""


class SolverError(NumericalError):
    """The MEM dual solver did not converge."""

    def __init__(self, message: str, gradient_norm: float = float("nan"), iterations: int = 0):
        super().__init__(message)
        self.gradient_norm = gradient_norm
        self.iterations = iterations


class DegenerateError(NumericalError):
    """Input is degenerate (all zero, all equal) for the requested analysis."""


class TopologyError(NumericalError):
    """Source adjacency graph is disconnected."""


class UndefinedCorrelationError(NumericalError):
    """Correlation of a zero-variance series is undefined."""


# =============================================================================
# File errors (exit code 4)
# =============================================================================

class FileError(SourceLocError):
    """Missing, unreadable or mismatched input file."""

    exit_code = 4

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(message)
        self.path = path
