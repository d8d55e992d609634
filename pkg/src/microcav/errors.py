"""Exception types shared across the toolkit.

Validation-type failures derive from ``ValueError`` and computation
failures from ``RuntimeError`` so the CLI can map them to exit codes.
"""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class UnstableCavityError(DomainError):
    """The two-mirror geometry does not support a bound Gaussian mode."""


class NoMatchingPointsError(DomainError):
    """The beam wavefront never reaches the requested radius of curvature."""


class UnachievableTargetError(DomainError):
    """A design target lies outside what the forward model can reach."""

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class NoEquilibriumError(RuntimeError):
    """The pressure balance has no sign change on the sag bracket."""


class FitError(RuntimeError):
    """A least-squares fit failed to converge.

    ``initial`` carries whatever the initialization step produced so the
    caller can still inspect it.
    """

    def __init__(self, message, initial=None):
        super().__init__(message)
        self.initial = initial


class RankDeficientError(FitError):
    """Design matrix of a linear fit is numerically rank deficient."""


class CalibrationError(RuntimeError):
    """Sideband calibration of a frequency sweep is impossible."""


class PeakDetectionError(RuntimeError):
    """Fewer peaks were found than the measurement requires."""
