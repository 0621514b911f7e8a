"""Exception types shared across the package."""


class SieveBayesError(Exception):
    """Base class for all package errors."""


class DomainError(SieveBayesError, ValueError):
    """An argument lies outside the domain of the operation."""


class PreconditionError(SieveBayesError, ValueError):
    """A documented precondition of an operation is violated."""


class DivergenceError(SieveBayesError, ArithmeticError):
    """A divergence is infinite because the reference density vanishes where the target does not."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class SamplerError(SieveBayesError, RuntimeError):
    """Inverse-CDF sampling failed (for example a numerically non-monotone CDF)."""


class UnknownDensityError(SieveBayesError, LookupError):
    """Catalog lookup for a name that does not exist."""


class DegenerateMarginalError(SieveBayesError, ArithmeticError):
    """Every Monte-Carlo draw has zero likelihood."""


class SolverError(SieveBayesError, RuntimeError):
    """An optimizer did not converge; ``certificate`` carries its final state."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate or {}


class StudyError(SieveBayesError, ValueError):
    """A study cannot be run or summarized with the given inputs."""


class DataFileError(DomainError):
    """A row of an observation file is malformed or out of range; ``line`` is 1-based."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
