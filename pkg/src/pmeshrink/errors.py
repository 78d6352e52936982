"""Exception hierarchy shared by all modules."""


class PmeShrinkError(Exception):
    """Base class for library errors."""


class OutOfRange(PmeShrinkError, ValueError):
    """Parameters outside the admissible region."""


class InvalidArgument(PmeShrinkError, ValueError):
    pass


class SeriesDiverged(PmeShrinkError):
    """The small-xi expansion was evaluated outside its useful radius."""


class StepFailure(PmeShrinkError):
    """Adaptive step size underflowed."""


class BracketNotFound(PmeShrinkError):
    pass


class NonMonotoneClassification(PmeShrinkError):
    """A C-classified shooting value lies below an A-classified one."""


class InsufficientTail(PmeShrinkError):
    pass


class DomainError(PmeShrinkError, ValueError):
    pass


class NegativeData(PmeShrinkError, ValueError):
    pass


class NewtonDiverged(PmeShrinkError):
    pass


class ConfigError(PmeShrinkError, ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
