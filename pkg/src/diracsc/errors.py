"""Exception hierarchy.  CLI exit codes key off the two base classes."""


class DiracLabError(Exception):
    pass


class PhysicalGuardError(DiracLabError):
    """A physical precondition (gap, Nyquist, boundary margin) is violated."""


class NumericalError(DiracLabError):
    """A numerical procedure failed to reach its tolerance."""


class InsufficientDerivativeOrder(DiracLabError):
    pass


class OrderUnavailable(DiracLabError):
    pass


class GapViolation(PhysicalGuardError):
    def __init__(self, message: str, point=None):
        super().__init__(message)
        self.point = point


class NyquistViolation(PhysicalGuardError):
    pass


class BoundaryMarginViolation(PhysicalGuardError):
    pass


class ClusterOverlap(NumericalError):
    pass


class EInSpectrum(PhysicalGuardError):
    pass


class StepFailure(NumericalError):
    pass


class ToleranceNotMet(NumericalError):
    pass


class NotFreePreset(PhysicalGuardError):
    pass


class EmptyShell(PhysicalGuardError):
    pass


class NonHermitian(DiracLabError):
    pass


class QuadratureDegreeTooLow(DiracLabError):
    pass


class BlockDiagonalityViolated(PhysicalGuardError):
    pass


class WindowEmpty(DiracLabError):
    pass


class ConvergenceFailure(NumericalError):
    pass


class EmptyRetainedSet(DiracLabError):
    pass
