"""Exception hierarchy shared by every slopeland module."""


class LandingError(Exception):
    """Base class for all slopeland failures."""


class GimbalLock(LandingError):
    pass


class NearPiRotation(LandingError):
    pass


class StepTooLarge(LandingError):
    pass


class ThrustTooLow(LandingError):
    pass


class AttitudeTooSteep(LandingError):
    """The vertical channel has lost authority (cos(pitch)cos(roll) too small)."""


class TerminalPhase(LandingError):
    pass


class NotInContact(LandingError):
    pass


class EmptyLog(LandingError):
    pass


class ConfigInvalid(LandingError):
    """A scenario configuration violates a named constraint."""

    def __init__(self, constraint: str, message: str = ""):
        self.constraint = constraint
        super().__init__(f"{constraint}: {message}" if message else constraint)


class ConstraintViolation(ConfigInvalid):
    pass


class UnknownKey(LandingError):
    def __init__(self, key: str, line: int | None = None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"unknown configuration key {key!r}{where}")


class ParseError(LandingError):
    def __init__(self, line: int, column: int, message: str):
        self.line = line
        self.column = column
        self.message = message
        super().__init__(f"line {line}, column {column}: {message}")
