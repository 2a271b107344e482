"""Exception hierarchy shared by the library and the command line."""


class EPRSimError(Exception):
    """Base class for all package errors."""


class ConfigError(EPRSimError, ValueError):
    """Invalid physical or numerical parameters."""


class DataError(EPRSimError, ValueError):
    """Malformed or unusable measurement data."""


class DegeneracyError(EPRSimError, ArithmeticError):
    """A numerical computation has no meaningful result."""


class GridTooNarrowError(DegeneracyError):
    pass


class SliceUnderflowError(DegeneracyError):
    pass


class OverCorrectionError(DegeneracyError):
    pass
