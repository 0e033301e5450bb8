"""Exception hierarchy shared by all viscoreg modules."""


class ViscoregError(Exception):
    """Base class for every error raised by the library."""


class DimensionMismatch(ViscoregError, ValueError):
    pass


class NonFinitePoint(ViscoregError, ValueError):
    pass


class EmptySet(ViscoregError, ValueError):
    pass


class NonConvergence(ViscoregError, RuntimeError):
    pass


class OutOfRange(ViscoregError, ValueError):
    pass


class NotConvergent(ViscoregError, ValueError):
    pass


class NotDivergent(ViscoregError, ValueError):
    pass


class MissingModulus(ViscoregError, ValueError):
    pass


class NotDecreasing(ViscoregError, ValueError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class NotNonexpansive(ViscoregError, ValueError):
    """A built-in mapping failed its construction-time Lipschitz gate."""


class SingularSystem(ViscoregError, ValueError):
    pass


class NonFiniteIterate(ViscoregError, FloatingPointError):
    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InnerBudgetExceeded(ViscoregError, RuntimeError):
    pass


class ScheduleOutOfRange(ViscoregError, ValueError):
    pass


class EpsilonOutOfRange(ViscoregError, ValueError):
    pass


class Underdetermined(ViscoregError, ValueError):
    pass


class TraceTooShort(ViscoregError, ValueError):
    pass


class GammaTooLarge(ViscoregError, ValueError):
    pass


class MuOutOfRange(ViscoregError, ValueError):
    pass


class ParseError(ViscoregError, ValueError):
    def __init__(self, message, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class ValidationError(ViscoregError, ValueError):
    def __init__(self, message, field=None):
        super().__init__(f"{field}: {message}" if field else message)
        self.reason = message
        self.field = field


class RunError(ViscoregError, RuntimeError):
    """An execution error, re-raised with the scenario it came from."""

    def __init__(self, message, scenario=None):
        super().__init__(f"scenario {scenario!r}: {message}" if scenario else message)
        self.scenario = scenario
