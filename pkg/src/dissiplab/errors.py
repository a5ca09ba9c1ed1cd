"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside a map's domain, or has non-finite coordinates."""


class ParameterError(ValueError):
    """Parameters violate a documented precondition."""


class NotInvertibleError(ValueError):
    """Inverse requested for a non-invertible map (e.g. Jacobian b = 0)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (lost cone condition, no convergence, ...)."""


class ConstructionError(RuntimeError):
    """A geometric construction could not be carried out (arcs missing,
    transversality lost, region degenerate, ...)."""
