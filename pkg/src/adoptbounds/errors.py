"""Exception hierarchy shared across the package.

The CLI maps the two top-level families onto distinct exit codes, so every
raise site should pick the family that describes *who* is at fault: the input
file (validation) or the identifying assumptions (assumption violation).
"""


class AdoptBoundsError(Exception):
    """Base class for all package errors."""


class DataValidationError(AdoptBoundsError, ValueError):
    """Input data or configuration does not satisfy the documented schema."""

    def __init__(self, message, row=None, field=None):
        self.row = row
        self.field = field
        prefix = []
        if row is not None:
            prefix.append(f"row {row}")
        if field is not None:
            prefix.append(f"field {field!r}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)


class AssumptionViolation(AdoptBoundsError):
    """Observed data are inconsistent with the identifying assumptions."""


class MonotonicityViolation(AssumptionViolation):
    pass


class NoInducedUsers(AssumptionViolation):
    pass


class SupportViolation(AssumptionViolation):
    pass


class BootstrapUnstable(AssumptionViolation):
    pass
