"""Exception taxonomy shared across the toolkit."""


class DissipicError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatch(DissipicError):
    pass


class NonSquare(DissipicError):
    pass


class NotSymmetric(DissipicError):
    pass


class NotDiagonal(DissipicError):
    pass


class NotPsd(DissipicError):
    pass


class MvvNotPsd(NotPsd):
    """The (v, v) block of a plant multiplier must be PSD for synthesis."""


class NoConvergence(DissipicError):
    pass


class Infeasible(DissipicError):
    """A feasibility program has no solution; carries the solver status."""

    def __init__(self, message="infeasible", status=None):
        super().__init__(message)
        self.status = status


class SolverNumericalFailure(DissipicError):
    """The conic solver broke down without an infeasibility certificate."""

    def __init__(self, message="solver failed", statuses=()):
        super().__init__(message)
        self.statuses = tuple(statuses)


class FixedPointDiverged(NoConvergence):
    """Implicit-layer iteration did not reach the residual tolerance."""


class SingularDpsi1(DissipicError):
    pass


class SingularDpsi2(DissipicError):
    pass


class SingularPartition(DissipicError):
    """Certificate partition does not yield invertible U, V factors."""


class SingularIminusRS(SingularPartition):
    pass


class IllConditionedUV(DissipicError):
    pass


class InfeasibleConstraintSet(Infeasible):
    """The convexified controller set is empty for this plant/supply."""


class InfeasibleForCertificate(Infeasible):
    """No controller near the target is certified by the fixed (P, Lambda)."""


class ProjectionInfeasible(DissipicError):
    """Training projection failed; the last certified controller is kept."""


class ZeroInputEnergy(DissipicError):
    pass


class NonFiniteState(DissipicError):
    pass
