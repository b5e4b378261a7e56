"""Exception hierarchy shared by all fpacs modules."""


class FpacsError(Exception):
    pass


class ConfigError(FpacsError, ValueError):
    """Invalid or inconsistent configuration (geometry tiling, unknown keys, ...)."""


class DimensionError(FpacsError, ValueError):
    """Array shapes that do not agree with the geometry they are used with."""


class SolverError(FpacsError, RuntimeError):
    def __init__(self, message, iteration=None):
        super().__init__(message)
        self.iteration = iteration


class CalibrationError(FpacsError, ValueError):
    pass


class FormatError(FpacsError, OSError):
    """A file on disk does not match the expected binary/text layout."""
