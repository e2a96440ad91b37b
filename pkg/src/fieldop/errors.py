"""Exception types shared across the package."""


class FieldOpError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FieldOpError, ValueError):
    """Operand shapes are inconsistent with the requested operation."""


class DomainError(FieldOpError, ValueError):
    """A value lies outside the mathematical domain of an operation."""


class UnsupportedSizeError(FieldOpError, ValueError):
    """An extent violates a structural requirement (e.g. not a power of two)."""


class UndersampledError(FieldOpError, ValueError):
    """A grid is too coarse to represent the requested spectral content."""


class ConfigError(FieldOpError, ValueError):
    """A configuration value or key is invalid."""


class DivergenceError(FieldOpError, RuntimeError):
    """An iteration produced non-finite values."""


class SolverError(FieldOpError, RuntimeError):
    """A numerical solver failed to converge."""


class MetricError(FieldOpError, ValueError):
    """A metric is undefined for the given inputs (e.g. zero-norm reference)."""
