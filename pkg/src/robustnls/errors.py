"""Exception hierarchy shared by every module of the package."""


class RobustNLSError(Exception):
    """Base class for all package errors."""


class DimensionError(RobustNLSError, ValueError):
    """Array shapes disagree with each other or with the problem."""


class NonFiniteInput(RobustNLSError, ValueError):
    """A user-supplied array contains NaN or Inf."""


class NonFiniteOutput(RobustNLSError, FloatingPointError):
    """A residual or Jacobian evaluation produced NaN or Inf."""

    def __init__(self, message, x=None):
        super().__init__(message)
        self.x = x


class RankDeficient(RobustNLSError, ValueError):
    """The perturbation matrix C does not have full column rank."""


class TooManyVertices(RobustNLSError, ValueError):
    """Vertex enumeration was requested for too many coordinates."""


class MaxIterations(RobustNLSError, RuntimeError):
    """A convex subproblem could not be certified within its iteration cap."""

    def __init__(self, message, gap=None, iterations=None):
        super().__init__(message)
        self.gap = gap
        self.iterations = iterations


class DegenerateInput(RobustNLSError, ValueError):
    """Input violates a non-degeneracy premise (e.g. a zero residual)."""


class ParseError(RobustNLSError, ValueError):
    """A matrix file or manifest could not be parsed."""

    def __init__(self, message, path=None, line=None, column=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{': '.join([', '.join(where), message])}"
        super().__init__(message)
        self.path = path
        self.line = line
        self.column = column
