"""Exception hierarchy shared by the library and the command line."""


class StochInvError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(StochInvError, ValueError):
    """Invalid combination of options, shapes or flags."""

    exit_code = 2


class NumericalError(StochInvError, ArithmeticError):
    """A numerical precondition failed (rank, definiteness, divergence)."""

    exit_code = 3


class NotSPDError(NumericalError):
    pass


class RankDeficientSketch(NumericalError):
    """The Gram matrix of a sketched product dropped eigenvalues."""

    def __init__(self, message, dropped=0):
        super().__init__(message)
        self.dropped = dropped


class DegeneratePivot(NumericalError):
    pass


class DivergenceError(NumericalError):
    """Non-finite entries appeared; ``state`` holds the last finite state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class MatrixFormatError(StochInvError):
    """Malformed input file. ``line`` is 1-based when known."""

    exit_code = 4

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
