"""Exception types shared across the package."""


class HyperlabError(Exception):
    """Base class for library errors."""


class DomainError(HyperlabError, ValueError):
    """A point or parameter lies outside the region where the quantity is defined."""


class StencilError(HyperlabError):
    """A finite-difference stencil would leave the available data."""


class CoverageError(HyperlabError):
    """Stored data does not cover the requested slice, curve or time range."""


class MissingDerivativeError(HyperlabError, KeyError):
    """A slice lacks derivative samples required by a functional."""


class InstabilityError(HyperlabError):
    """The evolution blew up; carries the time and sup norm where it was detected."""

    def __init__(self, message, t=None, sup=None):
        super().__init__(message)
        self.t = t
        self.sup = sup


class ConfigError(HyperlabError, ValueError):
    """Invalid run configuration."""


class NullConditionError(HyperlabError, ValueError):
    """The quadratic form P violates the null condition P(xi, xi) = 0 on null covectors."""
