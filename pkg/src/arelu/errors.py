"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Invalid extents or mismatched tensor shapes."""


class StateError(RuntimeError):
    """An operation was called out of order, e.g. backward before forward."""


class NonFiniteError(FloatingPointError):
    """A tensor holds NaN or Inf where finite values are required."""


class ConfigError(ValueError):
    """Invalid experiment, layer or activation configuration."""


class FormatError(ValueError):
    """A file does not follow the expected binary layout."""


class TrainingError(RuntimeError):
    """Training diverged (non-finite loss or gradient)."""


class ConsistencyError(ValueError):
    """Two inputs that must agree (e.g. image and label counts) do not."""
