"""Exception types shared across the package."""


class RecurrenceError(Exception):
    """Base class for all package errors."""


class InvalidParams(RecurrenceError, ValueError):
    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class InvalidTime(RecurrenceError, ValueError):
    pass


class UnsupportedCriticalCase(RecurrenceError, ValueError):
    pass


class InvalidCapacity(RecurrenceError, ValueError):
    pass


class InvalidObservation(RecurrenceError, ValueError):
    pass


class DiversityProductTooSmall(RecurrenceError, ValueError):
    pass


class TruncationTooSmall(RecurrenceError):
    pass


class SupportMismatch(RecurrenceError, ValueError):
    pass


class DegenerateSample(RecurrenceError, ValueError):
    pass


class SchemaError(RecurrenceError, ValueError):
    pass


class ConsistencyWarning(UserWarning):
    """Parameters are valid but outside the estimators' consistency region."""
