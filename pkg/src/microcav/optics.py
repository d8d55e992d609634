"""Closed-form Gaussian beam and two-mirror resonator geometry.

All lengths are in metres. A flat mirror (or a flat wavefront) is
represented by the :data:`FLAT` singleton rather than a large number, so
that ``g = 1 - L/R`` stays exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

from .errors import DomainError, NoMatchingPointsError, UnstableCavityError

C_LIGHT = 299_792_458.0  # m/s, exact


class _Flat:
    """Infinite radius of curvature."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "FLAT"

    def __reduce__(self):
        return (_Flat, ())


FLAT = _Flat()

Radius = Union[float, _Flat]


def is_flat(roc) -> bool:
    return roc is FLAT


def curvature(roc: Radius) -> float:
    """Return 1/R, with 0 for a flat surface."""
    if roc is FLAT:
        return 0.0
    if roc == 0:
        raise DomainError("radius of curvature must be non-zero (use FLAT for a plane)")
    return 1.0 / roc


def _positive(name, value):
    if not value > 0 or not math.isfinite(value):
        raise DomainError(f"{name} must be positive and finite, got {value!r}")


@dataclass(frozen=True)
class BeamParams:
    """Fundamental Gaussian beam described by its waist.

    Parameters
    ----------
    wavelength : float
        Vacuum wavelength [m].
    waist : float
        1/e^2 intensity radius at the focus [m].
    waist_position : float
        Axial coordinate of the focus [m].
    """

    wavelength: float
    waist: float
    waist_position: float = 0.0

    def __post_init__(self):
        _positive("wavelength", self.wavelength)
        _positive("waist", self.waist)

    @property
    def rayleigh_length(self) -> float:
        return math.pi * self.waist**2 / self.wavelength

    @property
    def wavenumber(self) -> float:
        return 2.0 * math.pi / self.wavelength

    def q(self, z: float) -> complex:
        """Complex beam parameter at axial position ``z``."""
        return complex(z - self.waist_position, self.rayleigh_length)

    def spot_size(self, z: float) -> float:
        zr = self.rayleigh_length
        dz = z - self.waist_position
        return self.waist * math.sqrt(1.0 + (dz / zr) ** 2)

    def curvature(self, z: float) -> float:
        """Wavefront curvature 1/R(z); zero at the waist."""
        dz = z - self.waist_position
        zr = self.rayleigh_length
        return dz / (dz * dz + zr * zr)

    @classmethod
    def from_q(cls, q: complex, z: float, wavelength: float) -> "BeamParams":
        """Build the beam whose complex parameter at plane ``z`` is ``q``."""
        if not q.imag > 0:
            raise DomainError(f"Im(q) must be positive, got {q!r}")
        w0 = math.sqrt(wavelength * q.imag / math.pi)
        return cls(wavelength, w0, z - q.real)


@dataclass(frozen=True)
class CavityGeometry:
    """Two-mirror resonator. Mirror radii are positive for concave mirrors."""

    length: float
    roc_1: Radius = FLAT
    roc_2: Radius = FLAT

    def __post_init__(self):
        _positive("cavity length", self.length)
        for roc in (self.roc_1, self.roc_2):
            if roc is not FLAT and (roc == 0 or not math.isfinite(roc)):
                raise DomainError(f"mirror radius must be finite and non-zero or FLAT, got {roc!r}")

    @property
    def g_parameters(self) -> tuple[float, float]:
        return (1.0 - self.length * curvature(self.roc_1),
                1.0 - self.length * curvature(self.roc_2))


@dataclass(frozen=True)
class StabilityReport:
    g1: float
    g2: float
    stable: bool

    @property
    def product(self) -> float:
        return self.g1 * self.g2


@dataclass(frozen=True)
class CavityMode:
    """Fundamental mode of a stable resonator.

    ``waist_position`` is measured from mirror 1 towards mirror 2.
    """

    waist: float
    waist_position: float
    rayleigh_length: float


def rayleigh_length(w0: float, wavelength: float) -> float:
    """Rayleigh length pi*w0^2/lambda of a beam with waist ``w0``."""
    _positive("waist", w0)
    _positive("wavelength", wavelength)
    return math.pi * w0 * w0 / wavelength


def waist_half_symmetric(length: float, roc: float, wavelength: float) -> float:
    """Mode waist (on the flat mirror) of a flat + concave resonator.

    Parameters
    ----------
    length : float
        Mirror separation [m].
    roc : float
        Radius of curvature of the concave mirror [m].
    wavelength : float
        Wavelength [m].

    Returns
    -------
    float
        ``sqrt(lambda/pi * sqrt(L (R - L)))``.
    """
    _positive("cavity length", length)
    _positive("wavelength", wavelength)
    if roc is FLAT or not length < roc:
        raise UnstableCavityError(
            f"flat/concave cavity needs 0 < L < R (L={length!r}, R={roc!r})")
    return math.sqrt(wavelength / math.pi * math.sqrt(length * (roc - length)))


def cavity_stability(geom: CavityGeometry) -> StabilityReport:
    g1, g2 = geom.g_parameters
    p = g1 * g2
    return StabilityReport(g1, g2, 0.0 <= p <= 1.0)


def cavity_mode(geom: CavityGeometry, wavelength: float) -> CavityMode:
    """Waist size and location of the TEM00 mode of a general two-mirror cavity.

    Raises
    ------
    UnstableCavityError
        If ``g1*g2`` lies outside the open interval (0, 1); on the
        boundary the mode is degenerate (zero or infinite waist).
    """
    _positive("wavelength", wavelength)
    g1, g2 = geom.g_parameters
    p = g1 * g2
    if not 0.0 < p < 1.0:
        raise UnstableCavityError(
            f"g1*g2 = {p:.6g} is not inside (0, 1); no bounded mode")
    denom = g1 + g2 - 2.0 * p
    L = geom.length
    w0 = math.sqrt(wavelength * L / math.pi * math.sqrt(p * (1.0 - p)) / abs(denom))
    z1 = L * g2 * (1.0 - g1) / denom
    return CavityMode(w0, z1, math.pi * w0 * w0 / wavelength)


def wavefront_radius(z: float, z_r: float) -> Radius:
    """Wavefront radius ``z (1 + z_R^2/z^2)``; :data:`FLAT` at the waist."""
    _positive("Rayleigh length", z_r)
    if z == 0:
        return FLAT
    return z * (1.0 + (z_r / z) ** 2)


def matching_points_separation(roc: float, z_r: float) -> float:
    """Axial distance between the two positions where R(z) equals ``roc``."""
    _positive("Rayleigh length", z_r)
    if roc is FLAT:
        raise NoMatchingPointsError("a flat mirror matches only the waist")
    disc = roc * roc - 4.0 * z_r * z_r
    if roc < 2.0 * z_r or disc < 0:
        raise NoMatchingPointsError(
            f"R = {roc:.6g} m is below the minimum wavefront radius 2*z_R = {2 * z_r:.6g} m")
    return math.sqrt(disc)


def roc_from_separation(separation: float, z_r: float) -> float:
    """Invert :func:`matching_points_separation`."""
    _positive("Rayleigh length", z_r)
    if separation < 0:
        raise DomainError(f"separation must be non-negative, got {separation!r}")
    return math.hypot(separation, 2.0 * z_r)
