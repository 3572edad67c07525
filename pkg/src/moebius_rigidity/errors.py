"""Exception hierarchy shared by all modules."""


class RigidityError(Exception):
    """Base class for every error raised by the package."""


class PreconditionError(RigidityError):
    pass


class NumericalFailure(RigidityError):
    pass


class InvalidQuadruple(PreconditionError):
    pass


class SampleMismatch(PreconditionError):
    pass


class NotMoebiusEquivalent(PreconditionError):
    pass


class InsufficientSample(PreconditionError):
    pass


class NotAntipodalAtPoint(PreconditionError):
    pass


class InfiniteGromovProduct(PreconditionError):
    pass


class InvalidParameter(PreconditionError):
    pass


class CurvatureViolation(PreconditionError):
    pass


class IntegrationFailure(NumericalFailure):
    pass


class BvpFailure(NumericalFailure):
    pass


class LimitNotConverged(NumericalFailure):
    pass


class MaxIterations(NumericalFailure):
    """Optimizer ran out of iterations. ``result`` holds the best iterate."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result
