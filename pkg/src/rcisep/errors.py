"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Input violates a documented precondition."""


class FormatError(ValueError):
    """Malformed instance, dataset or checkpoint file."""


class ShapeError(ValueError):
    """Tensor or feature dimensions do not line up."""


class StateError(RuntimeError):
    """Operation called in the wrong order (e.g. backward before forward)."""


class LpInfeasibleError(RuntimeError):
    """The LP became infeasible; `row` names a certificate row."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class SeparationTimeout(RuntimeError):
    """Exact separation exceeded its node or time budget."""
