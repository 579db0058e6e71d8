"""Exception types shared across the pipeline."""


class ValidationError(ValueError):
    """Input data or configuration violates a documented contract."""


class DataInsufficientError(ValueError):
    """Not enough data to perform the requested operation."""
