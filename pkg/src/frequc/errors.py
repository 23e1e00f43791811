"""Exception hierarchy shared by all frequc modules."""


class FreqUcError(Exception):
    """Base class for expected, user-facing failures."""


class DomainError(FreqUcError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(FreqUcError, ValueError):
    """Inconsistent or unsupported configuration."""


class ParseError(FreqUcError):
    """A data file does not match its schema."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        where = f"{self.path}:{line}" if line is not None else self.path
        super().__init__(f"{where}: {message}")


class ValidationError(FreqUcError, ValueError):
    """Loaded data violates a model invariant."""


class NumericalError(FreqUcError, ArithmeticError):
    """A numerical procedure produced a non-finite or singular result."""


class BuildError(FreqUcError):
    """The optimization model cannot be assembled from the given data."""


class SolverError(FreqUcError):
    """The MILP backend failed or is unavailable."""
