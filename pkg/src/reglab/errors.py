"""Exception hierarchy shared by all reglab modules."""


class RegLabError(Exception):
    """Base class for every error raised by reglab."""


class ValidationError(RegLabError, ValueError):
    """Bad input parameters (mapped to CLI exit code 1)."""


class NumericalError(RegLabError, ArithmeticError):
    """A numerical procedure failed (mapped to CLI exit code 2)."""


class EmptyDomain(ValidationError):
    pass


class InvalidExponent(ValidationError):
    pass


class InvalidOrder(ValidationError):
    pass


class InvalidParams(ValidationError):
    pass


class InvalidNesting(ValidationError):
    pass


class BallNotInterior(ValidationError):
    pass


class EmptyRange(ValidationError):
    pass


class CorpusTooSmall(ValidationError):
    pass


class NonConvergence(NumericalError):
    def __init__(self, iterations, residual, where=None):
        self.iterations = iterations
        self.residual = residual
        self.where = where
        msg = f"no convergence after {iterations} iterations (residual {residual:.3e})"
        if where is not None:
            msg += f" at {where}"
        super().__init__(msg)


class DegenerateData(NumericalError):
    """A ratio has a vanishing denominator; ``numerator`` tells 0/0 from x/0."""

    def __init__(self, message, numerator=0.0):
        self.numerator = numerator
        super().__init__(message)


class HypothesisViolated(NumericalError):
    def __init__(self, witness, message=None):
        self.witness = witness
        super().__init__(message or f"covering hypothesis (ii) violated at {witness}")


class QOutOfRange(UserWarning):
    """q lies outside the admissible window; the row is still computed but marked."""
