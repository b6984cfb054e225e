"""Exception hierarchy for kslab."""


class KSLabError(Exception):
    """Base class for all kslab errors."""


class DomainError(KSLabError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class HypothesisViolation(KSLabError, ValueError):
    """A smallness hypothesis (e.g. chi0 < chi_star) is not satisfied."""


class SaturationError(KSLabError, OverflowError):
    """The exponent of the weight function exceeds the configured cap."""


class InfeasibleError(KSLabError):
    """No admissible (p, eps) pair was found on the search grid."""


class SearchExhaustedError(KSLabError):
    """A grid search ran off the end of its range."""

    def __init__(self, message, largest_tried=None):
        super().__init__(message)
        self.largest_tried = largest_tried


class EmptyBracketError(KSLabError, ValueError):
    """The admissible interval for the Lyapunov weight K is empty."""


class WindowEmptyError(KSLabError):
    """Not enough decaying samples to fit a rate."""


class ShortTrajectoryError(KSLabError):
    """The trajectory tail holds too few records."""


class ConfigError(KSLabError, ValueError):
    """Invalid run configuration."""


class SolverError(KSLabError):
    """Failure inside the time integrator."""

    def __init__(self, message, step=None, t=None):
        if step is not None:
            message = f"{message} (step {step}, t={t:.6g})"
        super().__init__(message)
        self.step = step
        self.t = t


class CFLViolation(SolverError):
    """The explicit transport step would produce negative density."""


class LinearSolverError(SolverError):
    """Conjugate gradient failed to reach the requested residual."""


class PositivityError(SolverError):
    """A field became negative beyond roundoff; indicates a scheme bug."""


class TimeStepUnderflowError(SolverError):
    """Adaptive time step fell below the floor (suspected blow-up)."""
