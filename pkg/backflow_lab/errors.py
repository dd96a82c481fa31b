"""Exception hierarchy for backflow-lab
Every error also derives from the closest built-in so callers may catch
ValueError / RuntimeError directly.
"""


class BackflowLabError(Exception):
    """Base class of all library errors."""


class DimensionMismatchError(BackflowLabError, ValueError):
    """Operands have incompatible shapes or subsystem dimensions."""


class InvalidStateError(BackflowLabError, ValueError):
    """Matrix is not a density matrix, or weights are not a distribution."""


class InvalidPovmError(BackflowLabError, ValueError):
    """Effects are not positive or do not sum to the identity."""


class NotTracePreservingError(BackflowLabError, ValueError):
    """Kraus operators or Choi matrix fail trace preservation."""


class CPTPViolationError(BackflowLabError, ValueError):
    """A dynamics family produced a map that is not CPTP at some time."""


class ConfigError(BackflowLabError, ValueError):
    """Experiment configuration is malformed."""


class NonInvertibleError(BackflowLabError, RuntimeError):
    """Λ(t) is singular or too ill-conditioned to invert."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(message)
        self.condition = condition


class NoConvergenceError(BackflowLabError, RuntimeError):
    """Optimization stopped above the requested duality gap.

    `result` holds the best certified result reached before giving up.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleError(BackflowLabError, RuntimeError):
    """No POVM satisfies the requested probability constraint."""


class SolverError(BackflowLabError, RuntimeError):
    """The conic solver failed or returned an unusable status."""


class NonHermitianError(BackflowLabError, ValueError):
    """A matrix required to be Hermitian is not, within tolerance."""
