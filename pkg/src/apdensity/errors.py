"""Exception types shared across the toolkit."""


class ApDensityError(Exception):
    """Base class for all errors raised by this package."""


class DiameterTooLarge(ApDensityError):
    pass


class BoundViolation(ApDensityError):
    pass


class SearchFailed(ApDensityError):
    pass


class BudgetExhausted(ApDensityError):
    pass


class GroupMismatch(ApDensityError):
    pass


class SubgroupViolation(ApDensityError):
    pass


class DepthExceeded(ApDensityError):
    pass


class Infeasible(ApDensityError):
    pass


class BadExtension(ApDensityError):
    pass


class AmbientMismatch(ApDensityError):
    pass


class ShiftNotFound(ApDensityError):
    pass


class BudgetExceeded(ApDensityError):
    pass


class ConfigInvalid(ApDensityError):
    """Invalid user-facing configuration; ``field`` names the offending entry."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class ParamOutOfRange(ConfigInvalid):
    pass


class InvariantViolation(ApDensityError):
    """An internal consistency check failed; always indicates a bug."""
