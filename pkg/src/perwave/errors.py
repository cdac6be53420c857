"""Typed failures raised across the package.

Every error derives from :class:`PerwaveError`; the CLI maps these to exit
code 1 and prints the message on standard error.
"""


class PerwaveError(Exception):
    """Base class for domain errors."""


class ModelError(PerwaveError):
    """Unknown model name or invalid parameter."""


class DimensionMismatch(PerwaveError):
    pass


class GridError(PerwaveError):
    """Grid too short or too coarse for the requested construction."""


class NoConvergence(PerwaveError):
    def __init__(self, message, iterations=0, residual_history=()):
        super().__init__(message)
        self.iterations = iterations
        self.residual_history = list(residual_history)


class SingularJacobian(PerwaveError):
    def __init__(self, message, sigma_min=0.0):
        super().__init__(message)
        self.sigma_min = sigma_min


class BoundaryInconsistent(PerwaveError):
    """Attached end states are not periodic solutions."""


class ContinuationStalled(PerwaveError):
    def __init__(self, message, param_value=None):
        super().__init__(message)
        self.param_value = param_value


class MatchingConditionViolated(PerwaveError):
    pass


class NotAPulse(PerwaveError):
    pass


class InsufficientData(PerwaveError):
    pass


class IntegrationFailure(PerwaveError):
    pass


class NonHyperbolic(PerwaveError):
    pass


class ReferenceDegenerate(PerwaveError):
    pass


class EssentialSpectrum(PerwaveError):
    pass


class IndexMismatch(PerwaveError):
    def __init__(self, message, l_minus=None, l_plus=None):
        super().__init__(message)
        self.l_minus = l_minus
        self.l_plus = l_plus


class NotPeriodicProfile(PerwaveError):
    pass


class RootOnContour(PerwaveError):
    pass


class MaxRefinementExceeded(PerwaveError):
    pass


class TooLarge(PerwaveError):
    pass


class BreakdownAtShift(PerwaveError):
    pass


class AdjointKernelNotOneDimensional(PerwaveError):
    pass


class LPlusSingular(PerwaveError):
    pass
