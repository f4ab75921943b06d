"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line front end can map
failures to distinct process exit statuses.
"""

from __future__ import annotations


class LCFShapeError(Exception):
    exit_code = 1


class ParseError(LCFShapeError):
    """Malformed mesh or configuration text."""

    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeometryError(LCFShapeError):
    """Degenerate or inverted element, or a degenerate face."""

    exit_code = 3

    def __init__(self, message: str, element: int | None = None):
        self.element = element
        super().__init__(message)


class SingularSystemError(LCFShapeError):
    exit_code = 4


class NumericError(LCFShapeError):
    exit_code = 5


class GateFailure(LCFShapeError):
    """A validation gate (e.g. gradient check) was not met."""

    exit_code = 6


class ConfigError(LCFShapeError):
    exit_code = 7


class ConstraintError(LCFShapeError):
    """Cyclic pairing or Dirichlet data inconsistent with the geometry."""

    exit_code = 8


class UnsupportedElementError(ConfigError):
    pass


class SaturatedLifeWarning(UserWarning):
    """Strain amplitude beyond the low-cycle end of the life bracket."""
