"""Finesse, loss budgets, cooperativity and strong-coupling figures of merit.

Conventions
-----------
* Transmissions and losses are dimensionless power fractions (ppm only at
  the configuration boundary).
* Cooperativity is ``eta = 24 F / (pi k^2 w^2)`` with ``w`` the cavity
  mode waist, which for a flat + concave cavity sits on the flat mirror.
* Rates follow ``eta = g^2 / (kappa * gamma)`` where ``kappa`` is the
  angular half-linewidth of the cavity (``pi * FWHM``) and ``gamma`` the
  atomic dipole (amplitude) decay rate, i.e. half the natural linewidth in
  rad/s. Other texts put factors of 2 in different places; keep this in
  mind when comparing numbers.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DomainError, UnstableCavityError
from .optics import (
    C_LIGHT,
    FLAT,
    CavityGeometry,
    Radius,
    cavity_mode,
    cavity_stability,
)


@dataclass(frozen=True)
class MirrorSpec:
    """One mirror: curvature plus power transmission and excess loss."""

    roc: Radius = FLAT
    transmission: float = 0.0
    excess_loss: float = 0.0

    def __post_init__(self):
        for name in ("transmission", "excess_loss"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise DomainError(f"{name} must lie in [0, 1), got {v!r}")

    @property
    def loss(self) -> float:
        return self.transmission + self.excess_loss


@dataclass(frozen=True)
class CavityDesign:
    """A two-mirror cavity with its loss budget and measurement uncertainties.

    Stability is not enforced here; the operations that need a bound mode
    check it, so that reports can flag a bad row instead of refusing it.
    """

    length: float
    mirror_1: MirrorSpec
    mirror_2: MirrorSpec
    wavelength: float = 780e-9
    length_uncertainty: float = 0.0
    roc_uncertainty: float = 0.0
    name: str = ""

    def __post_init__(self):
        if not self.length > 0:
            raise DomainError(f"cavity length must be positive, got {self.length!r}")
        if not self.wavelength > 0:
            raise DomainError(f"wavelength must be positive, got {self.wavelength!r}")
        if self.length_uncertainty < 0 or self.roc_uncertainty < 0:
            raise DomainError("uncertainties must be non-negative")

    @property
    def geometry(self) -> CavityGeometry:
        return CavityGeometry(self.length, self.mirror_1.roc, self.mirror_2.roc)

    @property
    def curved_roc(self) -> Radius:
        """Radius of the (first) curved mirror, as tabulated in reports."""
        if self.mirror_2.roc is not FLAT:
            return self.mirror_2.roc
        return self.mirror_1.roc


@dataclass(frozen=True)
class AtomSpec:
    """Two-level atom: transition wavelength [m] and dipole decay rate [rad/s]."""

    wavelength: float
    dipole_decay: float

    def __post_init__(self):
        if not (self.wavelength > 0 and self.dipole_decay > 0):
            raise DomainError("atom wavelength and dipole decay rate must be positive")


@dataclass(frozen=True)
class CouplingRates:
    """Angular rates [rad/s] and the resulting regime."""

    g: float
    kappa: float
    gamma: float
    cooperativity: float

    @property
    def strong_coupling(self) -> bool:
        return is_strong_coupling(self.g, self.kappa, self.gamma)


@dataclass(frozen=True)
class Uncertain:
    value: float
    std: float

    @property
    def relative(self) -> float:
        return self.std / abs(self.value) if self.value else math.inf


@dataclass(frozen=True)
class PropagatedUncertainty:
    """First-order uncertainties of finesse and cooperativity.

    ``jacobian`` has rows (F, eta) and columns ``inputs``.
    """

    finesse: Uncertain
    cooperativity: Uncertain
    inputs: tuple[str, ...]
    jacobian: np.ndarray = field(repr=False)


def scattering_loss(sigma: float, wavelength: float, form: str = "exact") -> float:
    """Power lost to scatter by a surface of rms roughness ``sigma``.

    ``form="exact"`` gives ``1 - exp(-(4 pi sigma/lambda)^2)``;
    ``form="approximate"`` keeps the leading quadratic term.
    """
    if sigma < 0:
        raise DomainError(f"roughness must be non-negative, got {sigma!r}")
    if not wavelength > 0:
        raise DomainError(f"wavelength must be positive, got {wavelength!r}")
    x = (4.0 * math.pi * sigma / wavelength) ** 2
    if form == "exact":
        return -math.expm1(-x)
    if form == "approximate":
        return x
    raise ValueError(f"form must be 'exact' or 'approximate', got {form!r}")


def free_spectral_range(length: float) -> float:
    if not length > 0:
        raise DomainError(f"cavity length must be positive, got {length!r}")
    return C_LIGHT / (2.0 * length)


def finesse_from_linewidth(length: float, linewidth: float) -> float:
    """Finesse ``c / (2 L dnu)`` from the FWHM linewidth [Hz]."""
    if not (length > 0 and linewidth > 0):
        raise DomainError("length and linewidth must be positive")
    return C_LIGHT / (2.0 * length * linewidth)


def linewidth_from_finesse(length: float, finesse: float) -> float:
    if not (length > 0 and finesse > 0):
        raise DomainError("length and finesse must be positive")
    return C_LIGHT / (2.0 * length * finesse)


def round_trip_loss(mirrors: Iterable) -> float:
    total = 0.0
    for m in mirrors:
        if isinstance(m, MirrorSpec):
            total += m.loss
        else:
            t, extra = m
            total += t + extra
    return total


def finesse_from_losses(mirrors: Iterable) -> float:
    """Finesse ``2 pi / sum(T_i + loss_i)``.

    ``mirrors`` holds :class:`MirrorSpec` objects or ``(T, excess)`` pairs.
    """
    total = round_trip_loss(mirrors)
    if total <= 0:
        raise DomainError("zero round-trip loss gives infinite finesse")
    if total >= 1:
        raise DomainError(f"round-trip loss {total!r} is not below 1")
    return 2.0 * math.pi / total


def cooperativity(finesse: float, waist: float, wavelength: float) -> float:
    """Single-atom cooperativity ``24 F / (pi k^2 w^2)``."""
    if not (finesse > 0 and waist > 0 and wavelength > 0):
        raise DomainError("finesse, waist and wavelength must be positive")
    k = 2.0 * math.pi / wavelength
    return 24.0 * finesse / (math.pi * k * k * waist * waist)


def design_waist(design: CavityDesign) -> float:
    return cavity_mode(design.geometry, design.wavelength).waist


def design_cooperativity(design: CavityDesign, finesse: float) -> float:
    return cooperativity(finesse, design_waist(design), design.wavelength)


def is_strong_coupling(g: float, kappa: float, gamma: float) -> bool:
    return g > kappa and g > gamma


def coupling_rates(design: CavityDesign, atom: AtomSpec, finesse: float) -> CouplingRates:
    """Coherent coupling and decay rates for a measured finesse.

    Raises :class:`~microcav.errors.UnstableCavityError` for geometries
    without a bound mode.
    """
    if not finesse > 0:
        raise DomainError(f"finesse must be positive, got {finesse!r}")
    eta = design_cooperativity(design, finesse)
    kappa = math.pi * linewidth_from_finesse(design.length, finesse)
    g = math.sqrt(eta * kappa * atom.dipole_decay)
    return CouplingRates(g, kappa, atom.dipole_decay, eta)


def _figures(length, roc, linewidth, design):
    # (F, eta) with the curved mirror's radius replaced by ``roc``
    r1, r2 = design.mirror_1.roc, design.mirror_2.roc
    if r2 is not FLAT:
        r2 = roc
    else:
        r1 = roc
    geom = CavityGeometry(length, r1, r2)
    F = finesse_from_linewidth(length, linewidth)
    w = cavity_mode(geom, design.wavelength).waist
    return F, cooperativity(F, w, design.wavelength)


def propagate_uncertainty(design: CavityDesign, linewidth: float,
                          linewidth_uncertainty: float = 0.0,
                          rel_step: float = 1e-5) -> PropagatedUncertainty:
    """Propagate length, curvature and linewidth errors into F and eta.

    Uses a central finite-difference Jacobian with respect to
    ``(L, R, dnu)`` and assumes independent inputs. ``R`` is the curved
    mirror of the design; a design with two curved mirrors perturbs only
    mirror 2 (``roc_uncertainty`` applies to that mirror).
    """
    if linewidth_uncertainty < 0:
        raise DomainError("linewidth uncertainty must be non-negative")
    geom = design.geometry
    report = cavity_stability(geom)
    if not report.stable:
        raise UnstableCavityError(f"g1*g2 = {report.product:.6g}; geometry is unstable")
    if report.product < 1e-6 or report.product > 1 - 1e-6:
        warnings.warn(
            f"g1*g2 = {report.product:.9g} is within 1e-6 of the stability boundary; "
            "linearized uncertainties are unreliable", RuntimeWarning, stacklevel=2)

    roc = design.curved_roc
    x0 = [design.length, roc, linewidth]
    sig = [design.length_uncertainty, design.roc_uncertainty, linewidth_uncertainty]
    names = ("length", "roc", "linewidth")

    f0 = np.array(_figures(*x0, design))
    jac = np.zeros((2, 3))
    for j, xj in enumerate(x0):
        if xj is FLAT:
            continue
        h = rel_step * abs(xj)
        for _ in range(12):
            up = list(x0)
            dn = list(x0)
            up[j] = xj + h
            dn[j] = xj - h
            try:
                jac[:, j] = (np.array(_figures(*up, design))
                             - np.array(_figures(*dn, design))) / (2 * h)
                break
            except UnstableCavityError:
                # a step straddles the stability boundary; shrink it
                h /= 10.0
        else:
            raise UnstableCavityError("geometry too close to the stability boundary to differentiate")
    std = np.sqrt((jac**2) @ np.square(sig))
    return PropagatedUncertainty(Uncertain(f0[0], std[0]), Uncertain(f0[1], std[1]),
                                 names, jac)


@dataclass(frozen=True)
class ReportRow:
    """One line of the cavity summary table. Values are SI / fractions."""

    name: str
    roc: Radius
    length: float
    transmission: float
    finesse_expected: Optional[float] = None
    finesse_obtained: Optional[float] = None
    cooperativity: Optional[float] = None
    error: Optional[str] = None


def report_row(design: CavityDesign, linewidth: Optional[float]) -> ReportRow:
    """Evaluate one summary row; failures are recorded in ``error``."""
    base = dict(name=design.name, roc=design.curved_roc, length=design.length,
                transmission=design.mirror_2.transmission
                if design.mirror_2.roc is not FLAT else design.mirror_1.transmission)
    try:
        rep = cavity_stability(design.geometry)
        if not rep.stable:
            raise UnstableCavityError(f"unstable geometry (g1*g2 = {rep.product:.4g})")
        f_exp = finesse_from_losses([design.mirror_1, design.mirror_2])
        f_obt = eta = None
        if linewidth is not None:
            f_obt = finesse_from_linewidth(design.length, linewidth)
            eta = design_cooperativity(design, f_obt)
    except (ValueError, ArithmeticError) as exc:
        return ReportRow(**base, error=str(exc))
    return ReportRow(**base, finesse_expected=f_exp, finesse_obtained=f_obt,
                     cooperativity=eta)


def table_report(entries: Sequence[tuple[CavityDesign, Optional[float]]]) -> list[ReportRow]:
    """Summary rows for ``(design, measured FWHM linewidth)`` pairs.

    Expected finesse comes from the mirror transmissions (plus any excess
    loss), obtained finesse from the linewidth, and cooperativity from the
    obtained finesse. A failing row is flagged without aborting the rest.
    """
    return [report_row(design, linewidth) for design, linewidth in entries]
