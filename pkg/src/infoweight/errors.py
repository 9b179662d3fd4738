"""Exception types shared across the package."""


class InfoWeightError(Exception):
    """Base class for all package-specific errors."""


class EigenSolveError(InfoWeightError):
    """Eigen-decomposition failed to converge; carries the offending matrix."""

    def __init__(self, message, matrix=None):
        super().__init__(message)
        self.matrix = matrix


class SingularMatrixError(InfoWeightError):
    """A matrix power with a negative exponent hit a non-positive eigenvalue."""


class UnsupportedOracleError(InfoWeightError):
    """Exact moments requested for a distribution without finite support."""


class ConvergenceError(InfoWeightError):
    """An iterative solver failed to reach its tolerance; carries its trace."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class StabilityError(InfoWeightError):
    """A regression system fell outside its certified conditioning window."""


class ConfigurationError(InfoWeightError):
    """Invalid algorithm parameters; carries the admissible alternative if known."""

    def __init__(self, message, admissible=None):
        super().__init__(message)
        self.admissible = admissible


class ConfigParseError(InfoWeightError):
    """A harness config failed validation; carries the offending field path."""

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field
