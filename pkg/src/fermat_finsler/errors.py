"""Exception hierarchy shared by every module of the package."""


class FermatFinslerError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(FermatFinslerError):
    """A config file or expression could not be parsed or validated."""


class DomainError(FermatFinslerError):
    """A point (or a finite-difference stencil around it) left the chart bounds."""


class DegenerateDirection(FermatFinslerError):
    """A direction vector is too close to the zero section."""


class RandersConditionError(FermatFinslerError):
    """The one-form of a Randers metric has norm >= 1 somewhere on the sampled bounds."""


class NoDescent(FermatFinslerError):
    """Armijo backtracking could not find a decreasing step."""


class NotAGeodesic(FermatFinslerError):
    """A curve handed to the light-ray lift fails the geodesic residual check."""


class NonPositiveConformal(FermatFinslerError):
    """A conformal factor is non-positive at a sampled point."""


class Inconsistent(FermatFinslerError):
    """Two independent causality verdicts disagree beyond the grid tolerance."""
