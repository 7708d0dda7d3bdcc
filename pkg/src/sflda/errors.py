"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class NumericalError(RuntimeError):
    """A linear system was singular or a factorization failed."""

    def __init__(self, message, condition_estimate=None):
        super().__init__(message)
        self.condition_estimate = condition_estimate


class ConvergenceError(RuntimeError):
    """An iteration hit its cap or stalled; carries the last iterate."""

    def __init__(self, message, last_result=None, diagnostics=None):
        super().__init__(message)
        self.last_result = last_result
        self.diagnostics = diagnostics or {}


class GridSearchError(RuntimeError):
    """Every grid point failed; `failures` maps grid point -> reason."""

    def __init__(self, message, failures):
        super().__init__(message)
        self.failures = failures


class DataFormatError(ValueError):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
