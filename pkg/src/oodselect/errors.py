"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Raised when an input file or config value fails validation."""


class TrainingDivergedError(RuntimeError):
    """Raised when an iterative fit produces a non-finite loss."""
