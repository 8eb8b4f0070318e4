"""Exception types raised across the package."""


class BlowupLabError(Exception):
    """Base class for all package errors."""


class NegativeInput(BlowupLabError, ValueError):
    pass


class LogDomainError(BlowupLabError, ArithmeticError):
    """A log-space subtraction produced a non-positive argument."""


class QuadratureNoConvergence(BlowupLabError):
    pass


class InvalidRange(BlowupLabError, ValueError):
    pass


class HypothesesUnmet(BlowupLabError):
    def __init__(self, failing, report=None):
        super().__init__(f"hypotheses not verified: {', '.join(failing)}")
        self.failing = tuple(failing)
        self.report = report


class WindowViolation(BlowupLabError, ValueError):
    pass


class OrderingViolation(BlowupLabError, ValueError):
    pass


class NeverHolds(BlowupLabError):
    pass


class LimitNotAboveOne(BlowupLabError):
    pass


class MembershipViolation(BlowupLabError):
    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details or {}


class BoundViolated(BlowupLabError):
    def __init__(self, message, y=None, ratio=None):
        super().__init__(message)
        self.y = y
        self.ratio = ratio


class StepUnderflow(BlowupLabError):
    """Step size collapsed without the solution growing (stiffness failure)."""


class NonlinearSubstepOverflow(BlowupLabError):
    """The pointwise flow u' = f(u) blew up inside a single split step."""


class ConvexityViolation(BlowupLabError):
    pass


class SupersolutionViolation(BlowupLabError):
    pass


class DomainTooSmall(BlowupLabError):
    pass


class ManifestError(BlowupLabError, ValueError):
    pass
