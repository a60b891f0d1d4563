"""Exception hierarchy shared by all heatctl modules."""


class HeatctlError(Exception):
    """Base class for computation errors surfaced by the CLI with exit status 1."""


class InvalidInput(HeatctlError, ValueError):
    """An argument violates an operation's precondition."""


class SingularSystemError(HeatctlError):
    """A positive-definite solve met a singular or indefinite matrix."""

    def __init__(self, message, smallest_eigenvalue):
        super().__init__(f"{message} (smallest eigenvalue {smallest_eigenvalue:.6e})")
        self.smallest_eigenvalue = smallest_eigenvalue


class NotNullControllable(HeatctlError):
    """The Gramian is singular on a direction the control must reach."""


class HypothesisViolation(HeatctlError, ValueError):
    """Inputs break a hypothesis required by the result being checked."""


class ResolutionError(HeatctlError):
    """A quadrature, truncation or lattice is too coarse for the requested accuracy."""


class SizeLimitError(HeatctlError):
    """An assembled problem exceeds the configured size limit."""


class ConvergenceError(HeatctlError):
    """An iterative kernel did not reach its stopping criterion."""
