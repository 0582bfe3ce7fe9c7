"""Exception hierarchy shared by all trapgap modules."""

from __future__ import annotations


class TrapGapError(Exception):
    """Base class for every error raised by the package."""


class OrderingViolation(TrapGapError, ValueError):
    def __init__(self, index: int, inequality: str):
        self.index = index
        self.inequality = inequality
        super().__init__(f"ordering violated at inequality #{index}: {inequality}")


class NonMonotoneSigma(TrapGapError, ValueError):
    def __init__(self, index: int, sigma):
        self.index = index
        super().__init__(
            f"sigma must be strictly increasing (relative gap >= 1e-9); "
            f"fails between entries {index} and {index + 1}: {list(sigma)}"
        )


class InterlacingFailure(TrapGapError, ArithmeticError):
    def __init__(self, index: int, value: float, bracket):
        self.index = index
        self.value = value
        self.bracket = bracket
        super().__init__(f"root {index} = {value!r} lies outside bracket {bracket}")


class RootCountMismatch(TrapGapError, ArithmeticError):
    def __init__(self, expected: int, found: int):
        self.expected = expected
        self.found = found
        super().__init__(f"expected {expected} real roots, found {found}")


class SingularM(TrapGapError, ArithmeticError):
    pass


class NotInG(TrapGapError, ValueError):
    """The requested (sigma, mu) pair is not interlaced, so no design exists."""

    def __init__(self, index: int, inequality: str):
        self.index = index
        self.inequality = inequality
        super().__init__(f"target not designable, inequality #{index} fails: {inequality}")


class NoSolution(TrapGapError, ValueError):
    pass


class UnsupportedDimension(TrapGapError, ValueError):
    pass


class VolumeBudgetExceeded(TrapGapError, ValueError):
    pass


class HoleTooLarge(TrapGapError, ValueError):
    def __init__(self, index: int, radius: float, limit: float):
        self.index = index
        self.radius = radius
        self.limit = limit
        super().__init__(f"hole {index}: radius {radius!r} >= flat radius {limit!r}")


class MeshFailure(TrapGapError, RuntimeError):
    pass


class ParseError(TrapGapError, ValueError):
    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class DegenerateTriangle(TrapGapError, ValueError):
    def __init__(self, index: int, area: float):
        self.index = index
        self.area = area
        super().__init__(f"triangle {index} has area {area!r}")


class MissingPeriodicPairs(TrapGapError, ValueError):
    pass


class ConvergenceFailure(TrapGapError, RuntimeError):
    def __init__(self, iterations: int, best_residual: float):
        self.iterations = iterations
        self.best_residual = best_residual
        super().__init__(
            f"eigensolver did not converge after {iterations} iterations "
            f"(best residual {best_residual:.3e})"
        )


class InconsistentEpsilon(TrapGapError, ValueError):
    pass
