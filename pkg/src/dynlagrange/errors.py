"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the function being evaluated."""


class UtilityError(ValueError):
    """A piecewise utility violates a structural invariant (tiling, monotonicity)."""


class EnvelopeError(ValueError):
    """The concave envelope cannot be built for the given utility."""


class MarketError(ValueError):
    """Market coefficients are degenerate or inconsistent."""


class RangeError(ValueError):
    """A root could not be bracketed: the target lies outside the range of the map."""


class QuadratureAccuracyError(RuntimeError):
    """Panel refinement did not reach the requested relative tolerance.

    Carries the last estimate and the gap between the two finest levels.
    """

    def __init__(self, message, estimate, gap):
        super().__init__(message)
        self.estimate = estimate
        self.gap = gap


class ConsistencyError(RuntimeError):
    """Two independent evaluation routes of the same quantity disagree."""


class ConsistencyWarning(UserWarning):
    """Two evaluation routes agree only loosely (inside the hard limit)."""
