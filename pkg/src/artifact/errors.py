"""Exception hierarchy shared by all modules."""


class ArtifactError(Exception):
    """Base class for errors raised by this package."""


class DomainError(ArtifactError, ValueError):
    """Input outside the domain where an operation is defined."""


class ConstructionError(ArtifactError):
    """A finite range decomposition could not be built."""

    def __init__(self, msg, scale=None):
        super().__init__(msg)
        self.scale = scale


class FitError(ArtifactError):
    """Regression input insufficient or ill-conditioned."""


class NumericError(ArtifactError):
    """Quadrature or series evaluation did not reach its tolerance."""


class ResourceError(ArtifactError):
    """Requested enumeration exceeds the configured budget."""

    def __init__(self, msg, count=None):
        super().__init__(msg)
        self.count = count


class ResolutionError(ArtifactError):
    """Sample grid too coarse for the requested projection."""


class RootNotBracketedError(ArtifactError):
    """Shooting bracket does not contain a sign change."""


class ConfigError(ArtifactError):
    """Malformed or inconsistent configuration."""
