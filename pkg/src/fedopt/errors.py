"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


class UnsupportedOperation(DomainError):
    """The operation is not defined for this loss kind or configuration."""


class NumericalError(ArithmeticError):
    """An iterative solver failed to converge or produced non-finite values."""


class SearchError(RuntimeError):
    """Every run of a stepsize grid search diverged."""


class SvmlightParseError(ValueError):
    def __init__(self, message, lineno):
        super().__init__(f"line {lineno}: {message}")
        self.reason = message
        self.lineno = lineno
