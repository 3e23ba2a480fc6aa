"""Exception types raised by the solver."""


class HowardError(Exception):
    """Base class for all errors raised by :mod:`parhoward`."""


class NonConformingSpacing(HowardError, ValueError):
    pass


class DimensionOutOfRange(HowardError, ValueError):
    pass


class TooManySplits(HowardError, ValueError):
    pass


class PointOutsideDomain(HowardError, ValueError):
    pass


class CflViolation(HowardError, ValueError):
    pass


class MissingFixedValue(HowardError, KeyError):
    def __init__(self, node):
        self.node = int(node)
        super().__init__(f"no fixed value supplied for stencil neighbour node {self.node}")

    def __str__(self):
        return self.args[0]


class SingularSystem(HowardError, ArithmeticError):
    pass


class UnknownProblem(HowardError, KeyError):
    def __str__(self):
        return self.args[0]


class EmptyTargetAtThisResolution(HowardError, ValueError):
    pass


class MaxIterExceeded(HowardError, RuntimeError):
    """A Howard solve hit its iteration cap; ``result`` holds the last iterate."""

    def __init__(self, result, message=None):
        self.result = result
        super().__init__(message or f"Howard iteration did not converge in {result.iterations} iterations")


class MaxOuterExceeded(HowardError, RuntimeError):
    """The outer decomposition loop hit its cap; ``report`` holds the last iterate."""

    def __init__(self, report, message=None):
        self.report = report
        super().__init__(message or f"outer loop did not converge in {report.outer_iterations} iterations")


class ConfigError(HowardError, ValueError):
    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")
