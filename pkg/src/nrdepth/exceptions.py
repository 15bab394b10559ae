"""Error categories; each maps to a distinct CLI exit code."""


class NRDepthError(Exception):
    exit_code = 1


class ConfigurationError(NRDepthError, ValueError):
    exit_code = 3


class DimensionError(NRDepthError, ValueError):
    exit_code = 4


class DomainError(NRDepthError, ValueError):
    exit_code = 4


class InputError(NRDepthError, ValueError):
    exit_code = 5


class DegenerateGeometryError(NRDepthError, ArithmeticError):
    exit_code = 6


class DegenerateWeightsError(NRDepthError, ArithmeticError):
    exit_code = 6


class FormatError(NRDepthError, ValueError):
    """Malformed file; ``offset`` is the byte position where parsing failed."""

    exit_code = 7

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte {offset})"
        super().__init__(message)
        self.offset = offset


class SolverDivergedError(NRDepthError, FloatingPointError):
    exit_code = 8
