"""Exception hierarchy.

Every error raised on purpose by the package derives from :class:`LabError`.
The three families map onto CLI exit codes: input problems (2), numerical
failures (3) and output problems (4).
"""


class LabError(Exception):
    exit_code = 1


class ValidationError(LabError, ValueError):
    """Arguments violate an operation's preconditions."""

    exit_code = 2


class InvalidSizeError(ValidationError):
    pass


class OutOfRangeError(ValidationError):
    pass


class DegenerateRadiusError(ValidationError):
    pass


class EmptyControlError(ValidationError):
    pass


class FamilyMismatchError(ValidationError):
    pass


class ScalingMismatchError(ValidationError):
    pass


class UnsupportedKernelError(ValidationError):
    pass


class UnsupportedDimensionError(ValidationError):
    pass


class SignalDomainError(ValidationError):
    pass


class InsufficientDataError(ValidationError):
    pass


class VacuousTestError(ValidationError):
    pass


class ShapeError(ValidationError):
    pass


class NumericalError(LabError, ArithmeticError):
    """A computation could not be carried out to the required accuracy."""

    exit_code = 3


class EigensolverError(NumericalError):
    pass


class StepSizeError(NumericalError):
    pass


class QuadratureError(NumericalError):
    pass


class UnreachableTargetError(NumericalError):
    pass


class OutputError(LabError, OSError):
    exit_code = 4
