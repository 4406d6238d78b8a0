"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input outside an operation's mathematical domain."""


class UndefinedDirectionError(DomainError):
    """Geodesic direction requested at or antipodal to the reference point."""


class TubeMembershipError(DomainError):
    """Ambient point outside the tubular neighborhood of the manifold."""


class DegenerateNearestPointError(DomainError):
    """Ambient point with no unique nearest manifold point (the origin)."""


class ParameterError(ValueError):
    """Malformed numeric parameter (nonpositive delta, bad step, ...)."""


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""
