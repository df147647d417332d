"""Exception types shared across the package."""


class DDCSPError(Exception):
    """Base class for all package errors."""


class NoFeasiblePath(DDCSPError):
    """No root-terminal path satisfies the constraints."""


class LayerExplosion(DDCSPError):
    """A layer of a diagram under construction exceeded the node cap."""


class PathCapExceeded(DDCSPError):
    """Path enumeration would exceed the configured cap."""


class StateCapExceeded(DDCSPError):
    """State-graph expansion would exceed the configured cap."""


class CapExceeded(DDCSPError):
    """A brute-force oracle was asked to handle an instance above its cap."""


class InfeasibleInstance(DDCSPError):
    """The instance data admits no feasible solution at all."""


class SolverError(DDCSPError):
    """A MILP/LP solve ended without an optimal solution."""

    def __init__(self, status, message=None):
        self.status = status
        super().__init__(message or f"solver finished with status {status}")


class TimeLimitReached(DDCSPError):
    """A cooperative time limit expired."""


class ParseError(DDCSPError):
    """Malformed instance, solution, or LP file."""
