"""Exception types shared across the package."""


class AloccError(Exception):
    """Base class for all package errors."""


class DimensionError(AloccError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class UsageError(AloccError, RuntimeError):
    """An operation was called outside its preconditions."""


class ConfigError(AloccError, ValueError):
    """A network, training or experiment configuration is invalid."""


class FormatError(AloccError, ValueError):
    """A file on disk does not match its expected binary or image format."""


class ChecksumError(FormatError):
    pass


class VersionError(FormatError):
    pass


class NonFiniteError(AloccError, ArithmeticError):
    """A tensor or loss contains NaN or Inf."""
