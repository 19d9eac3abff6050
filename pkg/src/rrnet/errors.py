"""Exception types shared across the package."""


class RRNetError(Exception):
    """Base class for all package errors."""


class ShapeError(RRNetError, ValueError):
    pass


class BoundsError(RRNetError, IndexError):
    pass


class ContractError(RRNetError, ValueError):
    pass


class NumericError(RRNetError, ArithmeticError):
    pass


class ConfigError(RRNetError, ValueError):
    pass


class StateError(RRNetError, RuntimeError):
    pass


class ResourceError(RRNetError, MemoryError):
    pass


class FormatError(RRNetError, ValueError):
    pass


class DataError(RRNetError, ValueError):
    pass
