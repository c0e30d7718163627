class MosaicError(Exception):
    pass


class InvalidInput(MosaicError, ValueError):
    pass


class InvalidDistribution(InvalidInput):
    pass


class DimensionMismatch(InvalidInput):
    pass


class InvalidParams(InvalidInput):
    pass


class PreconditionViolated(InvalidInput):
    pass


class NegativeLambda(InvalidInput):
    pass


class AllWeightsZero(InvalidInput):
    pass


class UnsupportedCost(InvalidInput):
    pass


class SolverError(MosaicError):
    pass


class NumericalFailure(SolverError):
    pass


class SizeExceeded(SolverError):
    pass


class IterationBudgetExceeded(SolverError):
    pass


class UnboundedObjective(SolverError):
    pass


class RecoveryDegenerate(SolverError):
    pass


class Unreachable(SolverError):
    pass


class IntersectionEmpty(SolverError):
    """
    The intersection of the transport balls is empty.

    `certificate` holds the recession direction of the dual feasible set
    along which the dual objective decreases.
    """

    def __init__(self, message: str, certificate=None):
        super().__init__(message)
        self.certificate = certificate
