"""Exception types raised across the package."""


class SynclocError(Exception):
    """Base class for every error raised by this package."""


class InvalidRotation(SynclocError, ValueError):
    pass


class DegenerateMatrix(SynclocError, ValueError):
    pass


class InvalidConfig(SynclocError, ValueError):
    pass


class OutOfSupport(SynclocError, ValueError):
    """Query time outside the valid support of a spline."""


class OutOfRange(SynclocError, ValueError):
    """Query time outside the time range of a sampled trajectory."""


class TooShort(SynclocError, ValueError):
    pass


class CoincidentRobots(SynclocError, ValueError):
    pass


class TooFewMeasurements(SynclocError, ValueError):
    pass


class SingularMarginalization(SynclocError, ArithmeticError):
    """The eliminated block cannot be inverted reliably (degenerate geometry)."""


class Infeasible(SynclocError):
    """The semidefinite program has no feasible point.

    The best iterate, if any, is attached as ``solution``.
    """

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class ZeroSolution(SynclocError, ArithmeticError):
    pass


class DegenerateSolution(SynclocError, ArithmeticError):
    pass


class InconsistentLift(SynclocError, ArithmeticError):
    """The two time-offset readouts of a lifted solution disagree."""

    def __init__(self, message, lifted=None, ratio=None):
        super().__init__(message)
        self.lifted = lifted
        self.ratio = ratio


class ParseError(SynclocError, ValueError):
    def __init__(self, path, line, reason):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line
        self.reason = reason
