"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Raised when an operation receives inputs violating its contract."""


class NumericalError(RuntimeError):
    """Raised when a computation produces non-finite or unusable values."""


class TrainingDivergenceError(RuntimeError):
    """Raised when a training run produces non-finite losses or gradients."""


class ModelLoadError(RuntimeError):
    """Raised when a model file is corrupt, truncated or of an unknown version."""
