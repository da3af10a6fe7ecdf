"""Exception types shared across the package."""


class OrthoMergeError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(OrthoMergeError, ValueError):
    pass


class NumericalFailure(OrthoMergeError, ArithmeticError):
    """An iterative kernel did not converge.

    ``residual`` carries the last measured off-diagonal magnitude.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateColumn(OrthoMergeError, ValueError):
    def __init__(self, indices):
        self.indices = list(indices)
        super().__init__(f"near-zero columns: {self.indices}")


class InfeasibleSpec(OrthoMergeError, ValueError):
    pass


class ZeroVariance(OrthoMergeError, UserWarning):
    """Warning category for constant coordinates met during standardization."""


class DivergenceDetected(OrthoMergeError, ArithmeticError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")


class TrainingFailed(OrthoMergeError, RuntimeError):
    pass


class EmptyDataset(OrthoMergeError, ValueError):
    pass


class ZeroDenominator(OrthoMergeError, ZeroDivisionError):
    pass


class ZeroVector(OrthoMergeError, ValueError):
    pass
