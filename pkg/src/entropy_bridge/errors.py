"""Exception types shared across the toolkit."""


class DimensionError(ValueError):
    """Operands have inconsistent or invalid shapes."""


class SymmetryError(ValueError):
    """A matrix required to be symmetric is not, beyond tolerance."""


class DefinitenessError(ValueError):
    """A matrix required to be positive (semi)definite is not."""


class StabilityError(ValueError):
    """The state matrix is not asymptotically stable (spectral radius >= 1)."""


class ParameterError(ValueError):
    """A scalar parameter is outside its admissible range."""


class UnreachableError(RuntimeError):
    """The requested target cannot be reached (horizon, state, or loss level).

    Attributes carry the diagnostic context when available: ``tau`` for the
    minimal steering horizon, ``max_gamma`` for the largest attainable loss
    ratio, ``state`` for an unreachable terminal state.
    """

    def __init__(self, message, *, tau=None, max_gamma=None, state=None):
        super().__init__(message)
        self.tau = tau
        self.max_gamma = max_gamma
        self.state = state


class ConvergenceError(RuntimeError):
    """An iteration failed to converge; carries the last iterate."""

    def __init__(self, message, *, last=None, iterations=None):
        super().__init__(message)
        self.last = last
        self.iterations = iterations
