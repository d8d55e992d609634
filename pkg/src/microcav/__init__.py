"""Design, fabrication modelling and metrology for reflowed-glass micro-mirror cavities.

Modules
-------
optics      Gaussian beams, cavity stability and eigenmodes.
cqed        Finesse, loss budgets, cooperativity, uncertainty propagation.
reflow      Pressure-driven reflow of a glass membrane and furnace schedules.
metrology   Surface-profile fitting, roughness and residual periodograms.
instrument  Simulated linewidth and radius-of-curvature measurements.
config      Unit-suffixed configuration files.
report      Deterministic table rendering.
cli         ``microcav`` command-line front end.
"""
__version__ = "0.1.0"

from .errors import (  # noqa: F401
    CalibrationError,
    DomainError,
    FitError,
    NoEquilibriumError,
    NoMatchingPointsError,
    PeakDetectionError,
    RankDeficientError,
    UnachievableTargetError,
    UnstableCavityError,
)
from .optics import FLAT, BeamParams, CavityGeometry  # noqa: F401
