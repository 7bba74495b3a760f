"""Exception hierarchy shared by all modules."""


class GpnError(Exception):
    """Base class for domain errors raised by gpncausal."""


class AcyclicityError(GpnError):
    """Graph contains a directed cycle."""


class DomainError(GpnError, ValueError):
    """Argument refers to an unknown node or an invalid value."""


class CapacityError(GpnError):
    """Request exceeds a hard size guard (e.g. exhaustive enumeration)."""


class NumericError(GpnError, ArithmeticError):
    """A matrix stayed non positive definite after jitter escalation."""


class OptimizationError(GpnError):
    """Optimizer failed on every restart.

    The best value found (possibly non-converged) is kept on ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ArchiveIntegrityError(GpnError):
    """A DAG archive record lacks a required cached conditional."""


class RangeError(GpnError, ValueError):
    """Evaluation point lies outside the supported grid."""


class UsageError(GpnError):
    """Incompatible command-line options or missing inputs."""
