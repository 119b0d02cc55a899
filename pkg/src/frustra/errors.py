"""Exception types shared across the package."""


class FrustraError(Exception):
    """Base class for all package errors."""


class ValidationError(FrustraError):
    """Invalid manifest, graph, or configuration input (CLI exit code 2)."""


class NumericalError(FrustraError):
    """Numerical failure during evaluation (CLI exit code 3)."""
