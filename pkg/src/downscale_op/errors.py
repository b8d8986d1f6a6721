"""Exception types raised across the package."""


class DownscaleError(Exception):
    """Base class for all package errors."""


class DomainError(DownscaleError, ValueError):
    """A point or grid lies outside the admissible domain."""


class ShapeError(DownscaleError, ValueError):
    """Array shapes or grids are incompatible."""


class DegenerateReferenceError(DownscaleError, ValueError):
    """A reference field has zero norm, so a relative error is undefined."""


class EllipticityError(DownscaleError, ValueError):
    """A coefficient sample is not strictly positive."""


class IterationLimitError(DownscaleError, RuntimeError):
    """An iterative solver failed to converge within its iteration budget."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (final relative residual {residual:.3e})")
        self.residual = residual


class CompatibilityError(DownscaleError, ValueError):
    """A singular periodic system was given an incompatible right-hand side."""


class DivergenceError(DownscaleError, RuntimeError):
    """Training or sampling produced a non-finite objective."""

    def __init__(self, message, step):
        super().__init__(f"{message} at step {step}")
        self.step = step


class ConfigError(DownscaleError, ValueError):
    """Invalid or unreadable experiment configuration."""
