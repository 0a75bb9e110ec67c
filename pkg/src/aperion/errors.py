"""Exception types raised by the solvers."""


class AperionError(Exception):
    """Base class for all solver errors."""


class StructuralError(AperionError, ValueError):
    """Incompatible shapes, dimensions or value kinds."""


class DomainError(AperionError, ValueError):
    """An argument lies outside the region where an operation is defined."""


class ResonanceError(DomainError):
    """A small divisor fell below the resonance floor."""

    def __init__(self, message, k=None, divisor=None):
        super().__init__(message)
        self.k = k
        self.divisor = divisor


class ConvergenceError(AperionError, RuntimeError):
    """An iteration failed to reach its tolerance."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class StabilityError(AperionError, ValueError):
    """A time step exceeds the stability bound of an explicit scheme."""


class DegenerateError(DomainError):
    """Input reduces to an excluded degenerate case."""


class IllConditionedError(AperionError, RuntimeError):
    """A linear system is too poorly conditioned to trust."""


class ConsistencyError(AperionError, RuntimeError):
    """Two quantities that must agree do not."""


class WindowError(AperionError, RuntimeError):
    """A finite computational window visibly influences the result."""
