"""Exception hierarchy.

Every error carries ``where``, the ``module.operation`` that raised it, so the
CLI can report the origin and map it to an exit status.
"""


class HamflowError(Exception):
    """Base class for all library errors."""

    exit_code = 3

    def __init__(self, message, where=None):
        self.where = where
        prefix = f"[{where}] " if where else ""
        super().__init__(prefix + message)


class ConfigurationError(HamflowError):
    exit_code = 1


class PreconditionError(HamflowError):
    exit_code = 1


class GridMismatchError(HamflowError):
    exit_code = 1


class SingularOperatorError(HamflowError):
    def __init__(self, message, where=None, eigenvalue=None, block=None):
        super().__init__(message, where)
        self.eigenvalue = eigenvalue
        self.block = block


class NonStabilizedError(HamflowError):
    def __init__(self, message, where=None, values=None):
        super().__init__(message, where)
        self.values = values


class OrderViolationError(HamflowError):
    exit_code = 1


class UnresolvedCrossingError(HamflowError):
    pass


class HypothesisViolationError(HamflowError):
    exit_code = 2

    def __init__(self, message, where=None, failed=None):
        super().__init__(message, where)
        self.failed = failed


class DivergenceError(HamflowError):
    pass


class IterationLimitError(HamflowError):
    pass


class NoConvergenceError(HamflowError):
    pass


class BoundaryZeroError(HamflowError):
    pass


class DegreeMismatchError(HamflowError):
    pass


class MonitorViolation(HamflowError):
    exit_code = 2

    def __init__(self, message, where=None, report=None):
        super().__init__(message, where)
        self.report = report
