"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Malformed input: bad shapes, non-stochastic rows, out-of-range parameters."""


class NotErgodic(RuntimeError):
    """A transition matrix that must be irreducible and aperiodic is not."""


class ExplorationFailure(RuntimeError):
    """Some state-action pair has zero stationary weight under the sampling policy."""
