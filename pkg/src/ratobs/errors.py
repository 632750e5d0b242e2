"""Exception hierarchy shared by all ratobs modules."""


class RatobsError(Exception):
    """Base class for every error raised by the toolkit."""


class DivisionByZero(RatobsError, ZeroDivisionError):
    pass


class ZeroDenominatorAfterSubstitution(RatobsError, ZeroDivisionError):
    pass


class ResourceExceeded(RatobsError):
    """A configurable work budget (terms, reduction steps, ...) ran out."""


class ParseError(RatobsError):
    """Base class of all DSL diagnostics; carries a 1-based line/column."""

    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        self.message = message
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


class DSLSyntaxError(ParseError):
    pass


class UndefinedSymbol(ParseError):
    pass


class DimensionMismatch(ParseError):
    pass


class DenominatorZeroAtX0(ParseError):
    pass


class NotTriangular(RatobsError):
    """The chain equations cannot be solved one variable at a time.

    ``index`` is the 1-based position of the first unusable equation and
    ``profile`` maps each unsolved state name to its degree in that equation.
    """

    def __init__(self, index, profile):
        self.index = index
        self.profile = dict(profile)
        super().__init__(
            f"equation T{index} is not linear in a single unsolved state "
            f"(degrees: {self.profile})")


class NotInvertibleAtOrder(RatobsError):
    def __init__(self, m, state=None):
        self.m = m
        self.state = state
        msg = f"no rational inverse found at order m={m}"
        if state is not None:
            msg += f" (no element linear in {state})"
        super().__init__(msg)


class NotObservableUpTo(RatobsError):
    """No inverse found for any order up to ``m_max``.

    This is not a proof of unobservability.
    """

    def __init__(self, m_max):
        self.m_max = m_max
        super().__init__(f"no inverse found for any order m <= {m_max}")


class NonPolynomialMap(RatobsError):
    pass


class ShiftStructureViolation(RatobsError):
    pass


class UnobservablePair(RatobsError):
    pass


class NoStableCandidate(RatobsError):
    pass


class SimulationError(RatobsError):
    def __init__(self, message, t=None):
        self.t = t
        super().__init__(message)


class PoleCrossing(SimulationError):
    def __init__(self, t):
        super().__init__(f"denominator vanished near t={t:g}", t)


class NonFinite(SimulationError):
    def __init__(self, t):
        super().__init__(f"non-finite state at t={t:g}", t)


class UndefinedAtPoint(RatobsError):
    pass


class NoConvergence(RatobsError):
    pass
