"""Exception types raised by the weak-value engines."""


class WeaklineError(Exception):
    """Base class for all package errors."""


class ValidationError(WeaklineError, ValueError):
    """A scenario, label or request violates its invariants."""


class PoleError(ValidationError):
    """Spin label sits on the south pole, where tan(theta/2) diverges."""


class TruncationError(WeaklineError):
    """Fock space too small to represent an operator or state faithfully."""


class TailError(TruncationError):
    """Coherent-state weight beyond the Fock cutoff exceeds the tolerance."""


class UnsupportedBoundary(WeaklineError):
    """Boundary kind not representable by the requested engine."""


class OrthogonalPostselection(WeaklineError):
    """Pre- and postselected states are (numerically) orthogonal."""


class AlignmentError(WeaklineError, ValueError):
    """Source bins do not fall on the time-step grid."""


class LogBranchError(WeaklineError):
    """The generating functional moved too close to zero to pick a log branch."""


class StepFailure(WeaklineError):
    """Adaptive integrator could not meet its error tolerance."""


class NoConvergence(WeaklineError):
    """Newton shooting failed from every starting point."""

    def __init__(self, message, best_residual=float("inf")):
        super().__init__(message)
        self.best_residual = best_residual


class CausticError(WeaklineError):
    """Semiclassical amplitude diverges (vanishing monodromy entry)."""


class ZeroNorm(WeaklineError):
    """Postselected pointer state vanishes identically."""
