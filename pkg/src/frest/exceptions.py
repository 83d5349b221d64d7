"""Exception hierarchy shared by every module."""


class FrestError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(FrestError, ValueError):
    """Malformed array, shape mismatch or non-finite data."""


class InvalidParameterError(FrestError, ValueError):
    """A scalar parameter is outside its admissible range."""


class TransformStateError(FrestError):
    """An axis was transformed twice, or inverted without being transformed."""


class ConvergenceError(FrestError, ArithmeticError):
    """The Jacobi eigensolver hit its sweep cap."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class DecompositionError(FrestError, ArithmeticError):
    """Covariance is not symmetric positive definite."""


class InsufficientSamplesError(FrestError, ValueError):
    pass


class ParseError(FrestError, ValueError):
    """CSV content could not be parsed into a numeric matrix."""


class TrainingError(FrestError, ArithmeticError):
    """Non-finite loss during training."""

    def __init__(self, message, epoch):
        super().__init__(message)
        self.epoch = epoch
