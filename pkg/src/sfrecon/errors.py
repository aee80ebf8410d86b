"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """Arguments violate an operation's preconditions."""


class DegenerateFieldError(ValueError):
    """A field has (numerically) constant magnitude and cannot be standardized."""


class ShapeError(ValueError):
    """Tensor shapes do not agree."""


class SingularSystemError(RuntimeError):
    """A Gram system could not be factorized even after jitter escalation."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class OptimizationError(RuntimeError):
    """Every restart of a hyperparameter search produced a non-finite objective."""


class NonFiniteError(FloatingPointError):
    """A loss term or gradient became NaN or infinite."""

    def __init__(self, message, name=None):
        super().__init__(message)
        self.name = name


class FormatError(ValueError):
    """A binary file does not follow the expected layout."""
