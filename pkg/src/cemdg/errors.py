"""Exception types shared across the package."""


class CemdgError(Exception):
    """Base class for all package errors."""


class ConfigError(CemdgError):
    """Invalid configuration value or inconsistent inputs."""


class RasterFormatError(CemdgError):
    """Malformed raster file; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class SolverError(CemdgError):
    """Iterative solver failed to converge; carries the final residual."""

    def __init__(self, message, residual=None):
        if residual is not None:
            message = f"{message} (final relative residual {residual:.3e})"
        super().__init__(message)
        self.residual = residual


class RankError(CemdgError):
    """Singular or near-singular system, e.g. redundant constraints."""


class DefinitenessError(CemdgError):
    """A matrix required to be positive definite is not."""


class CoercivityError(CemdgError):
    """Assembled energy form is not coercive (penalty too small)."""


class StabilityError(CemdgError):
    """Time integration blew up; carries the offending step index."""

    def __init__(self, message, step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step
