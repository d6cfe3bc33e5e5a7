"""Shared exception types: user errors map to CLI exit 1, numerical failures to 2."""


class UserError(ValueError):
    """Bad configuration or inputs supplied by the caller."""


class NumericsError(RuntimeError):
    """A computation produced NaN/Inf or otherwise failed numerically."""
