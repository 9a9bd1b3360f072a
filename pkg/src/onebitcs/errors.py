"""Exception types shared across the package."""


class CapacityError(RuntimeError):
    """A requested computation exceeds its configured size budget."""


class DegenerateOperatorError(ValueError):
    """The sensing operator has a zero-norm column."""


class ConvergenceError(RuntimeError):
    """An iterative solve hit its iteration cap before reaching tolerance.

    Carries the best iterate found so callers can salvage a result.
    """

    def __init__(self, message, best=None, grad_norm=None):
        super().__init__(message)
        self.best = best
        self.grad_norm = grad_norm


class TuningError(RuntimeError):
    """Hyperparameter search could not bracket or reach its target."""


class NumericalError(RuntimeError):
    """A solver produced a non-finite objective value.

    Carries the last finite iterate when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
