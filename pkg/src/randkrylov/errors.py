"""Exception types raised across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class ParameterError(ValueError):
    """An argument is outside its admissible range."""


class MatrixMarketError(ValueError):
    """Malformed Matrix Market input; ``lineno`` is 1-based (0 if unknown)."""

    def __init__(self, message: str, lineno: int = 0):
        self.lineno = lineno
        if lineno:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class FunctionOverflow(ArithmeticError):
    """A dense matrix function produced non-finite values."""


class WhiteningBreakdown(ArithmeticError):
    """Triangular factor of a sketched basis is numerically singular."""


class RestartDivergence(ArithmeticError):
    """Restart cycle updates blew up or became NaN."""

    def __init__(self, message: str, cycle: int):
        self.cycle = cycle
        super().__init__(f"cycle {cycle}: {message}")


class DefectiveMatrixError(ArithmeticError):
    """Eigenvector matrix too ill-conditioned for the spectral oracle."""
