"""Exception types shared across the package."""


class SolverError(RuntimeError):
    """A numerical solver failed (singular system, vanishing scattering
    coefficient, blown-up split-step, ...)."""


class ConvergenceError(RuntimeError):
    """A Monte Carlo average did not stabilize within its budget.

    Carries the partial result in ``partial``.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
