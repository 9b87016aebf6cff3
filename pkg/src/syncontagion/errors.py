class InvalidParameterError(ValueError):
    """Raised when an argument violates a documented precondition."""


class StateError(RuntimeError):
    """Raised when an operation is applied to an unusable state."""


class UnsupportedModeError(RuntimeError):
    """Raised when a configuration voids the guarantees of an operation."""


class DataError(ValueError):
    """Raised when input data cannot yield any usable record."""
