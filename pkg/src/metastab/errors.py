"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad input, CLI exit
code 2) and ``NumericalFailure`` (a computation could not meet its
tolerance, CLI exit code 3).
"""


class MetastabError(Exception):
    """Base class for all package errors."""


class ValidationError(MetastabError, ValueError):
    """Input violates a documented precondition."""


class NumericalFailure(MetastabError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""


class InvalidSpec(ValidationError):
    pass


class NoEquilibria(ValidationError):
    pass


class DegenerateEquilibrium(ValidationError):
    pass


class NotOrdered(ValidationError):
    pass


class RadiusTooLarge(ValidationError):
    pass


class LevelOutOfRange(ValidationError):
    pass


class NoInteriorMax(ValidationError):
    pass


class NotPeriodic(ValidationError):
    pass


class UnstableStep(ValidationError):
    pass


class HorizonTooLong(ValidationError):
    pass


class PostulateViolation(NumericalFailure):
    """A hierarchy postulate failed during construction.

    ``postulate`` carries the identifier (``"P4"``, ...) of the condition
    that broke.
    """

    def __init__(self, postulate, message):
        super().__init__(f"{postulate}: {message}")
        self.postulate = postulate


class SingularSystem(NumericalFailure):
    pass


class WindowOverflow(NumericalFailure):
    pass


class QuadratureFailure(NumericalFailure):
    pass
