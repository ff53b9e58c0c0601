"""Exception hierarchy."""


class PSplineError(Exception):
    """Base class for all errors raised by psderiv."""


class InvalidKnotsError(PSplineError, ValueError):
    pass


class DegenerateMeshError(PSplineError, ValueError):
    pass


class DomainError(PSplineError, ValueError):
    pass


class EmptyDesignError(PSplineError, ValueError):
    pass


class UnsupportedDerivativeOrderError(PSplineError, ValueError):
    pass


class InsufficientCoefficientsError(PSplineError, ValueError):
    pass


class SingularSystemError(PSplineError, ArithmeticError):
    pass


class SaturatedFitError(PSplineError, ArithmeticError):
    pass


class InvalidLambdaError(PSplineError, ValueError):
    pass


class NoValidLambdaError(PSplineError, RuntimeError):
    pass


class ShapeError(PSplineError, ValueError):
    pass


class NonFiniteEstimateError(PSplineError, ArithmeticError):
    pass


class InsufficientDataError(PSplineError, ValueError):
    pass


class AlignmentError(PSplineError, ValueError):
    pass


class UnknownFunctionError(PSplineError, KeyError):
    pass
