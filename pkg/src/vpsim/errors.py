"""Exception hierarchy shared by all vpsim modules."""


class VPSimError(Exception):
    """Base class for every error raised by vpsim."""


class NeutralityViolation(VPSimError):
    pass


class SupportExceedsGrid(VPSimError):
    pass


class ShiftTooLarge(VPSimError):
    pass


class CFLViolation(VPSimError):
    pass


class BoundaryMassLeak(VPSimError):
    pass


class ParticleLeftDomain(VPSimError):
    pass


class NumericalBlowup(VPSimError):
    """Raised when a non-finite value appears anywhere in the state.

    ``state`` carries the offending state (grid or particles) so the caller
    can dump a diagnostic snapshot.
    """

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class TimeOutOfRange(VPSimError):
    pass


class EmptySupport(VPSimError):
    pass


class WrongSystemKind(VPSimError):
    pass


class InsufficientPoints(VPSimError):
    pass


class NonpositiveValues(VPSimError):
    pass


class IncompatibleSystemKind(VPSimError):
    pass


class UnknownQuantity(VPSimError):
    pass


class EmptySeries(UnknownQuantity):
    pass


class ConfigError(VPSimError):
    """Base for configuration problems; carries the key and line number."""

    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.key = key
        self.line = line


class ParseError(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class InvalidValue(ConfigError):
    pass
