"""Exception hierarchy shared across the toolkit."""


class IQABoostError(Exception):
    """Base class for all toolkit errors."""


class ParseError(IQABoostError, ValueError):
    """A manifest or score file row could not be parsed."""

    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class DuplicationError(IQABoostError, ValueError):
    pass


class RegistryError(IQABoostError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class CompletenessError(IQABoostError, LookupError):
    """A required (stimulus, metric) pair or report entry is missing."""


class ShapeError(IQABoostError, ValueError):
    pass


class DegenerateInputError(IQABoostError, ValueError):
    """Inputs violate a spread / size precondition."""


class NumericError(IQABoostError, ArithmeticError):
    def __init__(self, message, theta=None):
        self.theta = theta
        super().__init__(message)


class ConvergenceError(IQABoostError, RuntimeError):
    def __init__(self, message, worst_violation=None):
        self.worst_violation = worst_violation
        super().__init__(message)
