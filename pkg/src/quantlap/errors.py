"""Exception hierarchy shared by all modules."""


class QuantlapError(Exception):
    """Base class for library errors."""


class DomainError(QuantlapError, ValueError):
    """Input outside the domain of an operation (shape, Hermitian-ness, ...)."""


class DegenerateFrameError(QuantlapError, ValueError):
    """A frame or evaluation matrix is rank deficient."""


class PrecisionError(QuantlapError, ArithmeticError):
    """Quadrature or round-off left a result outside its invariants."""


class NonConvergenceError(QuantlapError, RuntimeError):
    """An iteration failed to converge or diverged."""


class UnsupportedError(QuantlapError, NotImplementedError):
    """Requested case is outside what the library implements."""


class ConfigError(QuantlapError, ValueError):
    """Invalid experiment configuration."""
