"""Exception hierarchy shared by all modules."""


class PviError(Exception):
    """Base class for every error raised by the package."""

    exit_code = 3


class PhysicalConditionViolated(PviError):
    """A velocity reaches or exceeds the speed of light."""


class OutOfWindow(PviError):
    """Derived density lies outside the admissible window."""


class HyperbolicityLost(PviError):
    """Sound speed or pressure left the hyperbolic range."""


class NoRoot(PviError):
    """The total-pressure inversion produced no admissible pressure."""


class FrontTooLarge(PviError):
    """Front amplitude exceeds the bound required by the lifting."""


class DegenerateJacobian(PviError):
    """The normal derivative of the lifting vanishes somewhere."""


class UnderResolved(PviError):
    """A stencil does not fit on the supplied grid."""


class IncompatibleState(PviError):
    """Boundary preconditions (tangency, kinematics) are violated."""


class ConstraintViolated(PviError):
    """A basic-state constraint fails beyond tolerance."""


class DegenerateDenominator(PviError):
    """A stability functional has a vanishing denominator."""


class SingularTransform(PviError):
    """A change of variables is numerically singular."""


class CflViolation(PviError):
    """Requested time step exceeds the stability bound."""


class UnstableBlowup(PviError):
    """The discrete solution grew far beyond the data scale."""


class NoContraction(PviError):
    """The front fixed-point iteration does not contract."""


class ShapeMismatch(PviError):
    """Arrays that must share a grid do not."""


class ParseError(PviError):
    """Scenario text could not be parsed."""

    exit_code = 2

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line


class ValidationError(PviError):
    """Scenario parsed but contains an invalid value."""

    exit_code = 2

    def __init__(self, message, key=None, line=None):
        super().__init__(message)
        self.key = key
        self.line = line
