"""Exception types shared across the simulator."""


class SemcomError(Exception):
    """Base class for all simulator errors."""


class ConfigurationError(SemcomError, ValueError):
    """Invalid or inconsistent configuration (scene, channel, denoiser, experiment)."""


class ContractViolation(SemcomError, ValueError):
    """A function was called with arguments outside its documented domain."""


class ProjectionError(SemcomError):
    """A point lies on or behind the image plane of a camera."""


class SingularGeometryError(SemcomError):
    """Back-projected rays are (near) parallel, so no unique intersection exists."""


class ParseError(SemcomError, ValueError):
    """Malformed input file; the message names the offending row and column."""
