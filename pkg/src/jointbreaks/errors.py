"""Exception hierarchy shared by the library and the command-line front end."""


class JointBreaksError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParseError(JointBreaksError, ValueError):
    """Malformed input file or series table."""

    exit_code = 2


class NumericalFailureError(JointBreaksError, ArithmeticError):
    """A matrix that must be invertible was (numerically) singular."""

    exit_code = 3


class InvalidArgumentError(JointBreaksError, ValueError):
    """Arguments violate a documented precondition."""

    exit_code = 4
