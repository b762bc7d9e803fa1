"""Exception hierarchy shared by the solver, theory and CLI layers."""


class SqrkError(Exception):
    """Base class for all package errors."""


class NumericalError(SqrkError, ArithmeticError):
    """A numerical routine failed (the CLI maps these to exit code 2)."""


class ZeroRowError(SqrkError, ValueError):
    def __init__(self, row):
        super().__init__(f"row {row} has (numerically) zero norm")
        self.row = row


class NonConvergenceError(NumericalError):
    pass


class EmptySampleError(SqrkError, ValueError):
    pass


class QuantileIndexZeroError(SqrkError, ValueError):
    pass


class EmptyAcceptedSetError(SqrkError, ValueError):
    pass


class QuantileConditionViolated(SqrkError, ValueError):
    """alpha * (1 - q) <= beta, so the corrupted-branch rate is undefined."""


class SamplingConditionViolated(SqrkError, ValueError):
    """alpha * q <= beta, so no subset size is admissible."""
