"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class SingularityError(ArithmeticError):
    """A geometric quantity is undefined, e.g. the log map at an antipode."""


class NumericalError(ArithmeticError):
    """An iterative computation produced non-finite values or did not converge."""
