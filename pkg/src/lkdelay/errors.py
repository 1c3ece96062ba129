"""Exception types shared across the package."""


class LKDelayError(Exception):
    """Base class for package errors."""


class SingularMatrixError(LKDelayError):
    """A matrix that must be inverted is singular or numerically so.

    ``which`` names the matrix: ``P``, ``S_at_node``, ``T_inner`` or
    ``I_plus_KGamma``.
    """

    def __init__(self, which: str, condition_estimate: float, detail: str = ""):
        self.which = which
        self.condition_estimate = float(condition_estimate)
        msg = f"{which} is singular (condition estimate {self.condition_estimate:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class DegreeTooLow(LKDelayError):
    """Target polynomial degree exceeds what a certificate can express."""


class BasisMismatch(LKDelayError):
    """Kernel degrees exceed the separable basis degree."""


class Infeasible(LKDelayError):
    """The synthesis SDP has no certificate at the requested degree."""

    def __init__(self, msg: str, status: str = "infeasible", eps: float | None = None):
        self.status = status
        self.eps = eps
        super().__init__(msg)


class ValidationFailed(LKDelayError):
    """Post-solve validation (e.g. closed-loop simulation) did not pass."""

    def __init__(self, msg: str, details: dict | None = None):
        self.details = details or {}
        super().__init__(msg)


class NonFiniteState(LKDelayError):
    """Simulation produced a non-finite state."""

    def __init__(self, t: float):
        self.t = float(t)
        super().__init__(f"non-finite state at t={self.t:.6g}")


class SolverError(LKDelayError):
    """The conic solver reported numerical trouble."""
