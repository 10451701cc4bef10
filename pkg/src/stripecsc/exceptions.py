"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    """A non-finite value appeared inside an iterative solver."""

    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class ConstraintInfeasible(ValueError):
    """No code satisfies the patch-error constraint at ``location``."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class FormatError(ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConvergenceWarning(UserWarning):
    pass
