"""Quasi-static model of vacuum-assisted glass reflow over a blind hole.

A thin softened glass membrane seals a cylindrical blind hole of radius
``a`` and depth ``d`` while the furnace is at the seal pressure. When the
furnace is back-filled to the forming pressure the membrane sags into the
hole as a spherical cap of depth ``h``. Equilibrium balances

    P_ext = P_gas(h) + C * gamma / R(h)

where ``P_gas`` follows the ideal-gas law for the trapped volume
``V0 - V_cap(h)`` and ``R(h) = (a^2 + h^2) / (2h)``. Only this endpoint is
modelled; the visco-elastic flow that gets there is not.

Internal units are SI: m, Pa, K, s.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, NoEquilibriumError, UnachievableTargetError
from .optics import FLAT, Radius

ZERO_CELSIUS = 273.15
MBAR = 100.0  # Pa
MINUTE = 60.0  # s


def celsius(t: float) -> float:
    return t + ZERO_CELSIUS


@dataclass(frozen=True)
class ReflowRecipe:
    """Blind-hole geometry, furnace pressures/temperatures and membrane law.

    The membrane pressure term is ``tension_factor * membrane_tension / R``;
    the default factor 4 corresponds to a thin film with two free surfaces.
    ``coverslip_thickness`` is carried for bookkeeping only.
    """

    hole_radius: float = 0.5e-3
    hole_depth: float = 2e-3
    seal_pressure: float = 300 * MBAR
    seal_temperature: float = celsius(800.0)
    forming_pressure: float = 700 * MBAR
    forming_temperature: float = celsius(800.0)
    membrane_tension: float = 0.3
    tension_factor: float = 4.0
    coverslip_thickness: float = 100e-6

    def __post_init__(self):
        for name in ("hole_radius", "hole_depth", "seal_pressure", "seal_temperature",
                     "forming_pressure", "forming_temperature", "tension_factor"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{name} must be positive, got {v!r}")
        if self.membrane_tension < 0:
            raise DomainError("membrane_tension must be non-negative")
        if self.forming_pressure < self.seal_pressure:
            raise DomainError(
                "forming pressure below seal pressure would bulge the membrane outwards")

    @property
    def hole_volume(self) -> float:
        return math.pi * self.hole_radius**2 * self.hole_depth


@dataclass(frozen=True)
class DeformationResult:
    sag: float
    roc: Radius
    internal_pressure: float
    residual: float
    iterations: int = 0

    @property
    def is_flat(self) -> bool:
        return self.roc is FLAT


def cap_radius(a: float, h: float) -> Radius:
    """Radius of the sphere through the rim (+-a, 0) and apex depth ``h``."""
    if h < 0:
        raise DomainError(f"sag must be non-negative, got {h!r}")
    if h == 0:
        return FLAT
    return (a * a + h * h) / (2.0 * h)


def cap_volume(a, h):
    """Volume of a spherical cap of base radius ``a`` and height ``h``.

    Works elementwise on arrays.
    """
    return math.pi * h * (3.0 * a * a + h * h) / 6.0


def cap_height_for_volume(a: float, volume: float) -> float:
    """Inverse of :func:`cap_volume` in ``h`` (the cubic has one real root)."""
    if volume < 0:
        raise DomainError("volume must be non-negative")
    # h^3 + 3 a^2 h - 6V/pi = 0, hyperbolic form of Cardano's root
    p = 3.0 * a * a
    q = -6.0 * volume / math.pi
    s = math.sqrt(p / 3.0)
    return -2.0 * s * math.sinh(math.asinh(1.5 * q / p / s) / 3.0)


def trapped_pressure(p0: float, t_seal: float, t: float, v0: float, v: float) -> float:
    """Ideal-gas pressure of gas sealed at ``(p0, t_seal, v0)`` now at ``(t, v)``."""
    if v <= 0:
        raise DomainError("trapped gas volume must be positive (pressure diverges)")
    return p0 * (t / t_seal) * (v0 / v)


def max_sag(recipe: ReflowRecipe, fill: float = 0.95) -> float:
    """Sag at which the cap would displace ``fill`` of the hole volume."""
    return cap_height_for_volume(recipe.hole_radius, fill * recipe.hole_volume)


def pressure_balance(recipe: ReflowRecipe, h: float) -> float:
    """Net inward pressure on the membrane at sag ``h`` [Pa]."""
    a = recipe.hole_radius
    v0 = recipe.hole_volume
    p_gas = trapped_pressure(recipe.seal_pressure, recipe.seal_temperature,
                             recipe.forming_temperature, v0, v0 - cap_volume(a, h))
    # C*gamma/R written as C*gamma*2h/(a^2+h^2) so h = 0 is regular
    p_tension = recipe.tension_factor * recipe.membrane_tension * 2.0 * h / (a * a + h * h)
    return recipe.forming_pressure - p_gas - p_tension


def _result(recipe, h, f, iterations):
    a = recipe.hole_radius
    v0 = recipe.hole_volume
    p_in = trapped_pressure(recipe.seal_pressure, recipe.seal_temperature,
                            recipe.forming_temperature, v0, v0 - cap_volume(a, h))
    return DeformationResult(h, cap_radius(a, h), p_in, f, iterations)


def equilibrium_deformation(recipe: ReflowRecipe, tol: float = 1e-6,
                            max_iter: int = 400) -> DeformationResult:
    """Solve the pressure balance for the equilibrium sag by bisection.

    Parameters
    ----------
    recipe : ReflowRecipe
    tol : float
        Residual tolerance on the pressure balance [Pa].

    Returns
    -------
    DeformationResult
        Flat (``sag == 0``) if there is no net inward pressure.

    Raises
    ------
    NoEquilibriumError
        If the balance is still positive when the cap fills 95 % of the hole.
    """
    f_lo = pressure_balance(recipe, 0.0)
    if f_lo <= 0:
        return _result(recipe, 0.0, f_lo, 0)
    lo, hi = 0.0, max_sag(recipe)
    f_hi = pressure_balance(recipe, hi)
    if f_hi > 0:
        raise NoEquilibriumError(
            f"net pressure still {f_hi:.4g} Pa inward at the maximum sag "
            f"{hi * 1e3:.4g} mm (95% of the hole volume); forming pressure too high "
            f"or hole too shallow")
    h, f = hi, f_hi
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break  # bracket at floating-point resolution
        f = pressure_balance(recipe, mid)
        h = mid
        if abs(f) <= tol:
            break
        if f > 0:
            lo = mid
        else:
            hi = mid
    else:
        it = max_iter
    return _result(recipe, h, f, it)


@dataclass(frozen=True)
class SweepPoint:
    hole_radius: float
    forming_pressure: float
    result: Optional[DeformationResult] = None
    error: Optional[str] = None

    @property
    def roc(self):
        return None if self.result is None else self.result.roc


def predict_roc_sweep(template: ReflowRecipe,
                      hole_radii: Optional[Sequence[float]] = None,
                      forming_pressures: Optional[Sequence[float]] = None) -> list[SweepPoint]:
    """Equilibrium deformation on the grid ``hole_radii x forming_pressures``.

    Unspecified axes stay at the template value. A failing point records
    its error and the sweep carries on.
    """
    radii = [template.hole_radius] if hole_radii is None else list(hole_radii)
    pressures = [template.forming_pressure] if forming_pressures is None else list(forming_pressures)
    rows = []
    for a in radii:
        for p in pressures:
            try:
                recipe = replace(template, hole_radius=a, forming_pressure=p)
                rows.append(SweepPoint(a, p, equilibrium_deformation(recipe)))
            except (ValueError, RuntimeError) as exc:
                rows.append(SweepPoint(a, p, error=str(exc)))
    return rows


_FREE_VARIABLES = ("forming_pressure", "hole_radius")


def hemisphere_pressure(recipe: ReflowRecipe) -> Optional[float]:
    """Forming pressure at which the cap becomes a hemisphere (``h = a``, ``R = a``).

    This is where ``R`` is smallest as a function of the forming pressure.
    None if the hemisphere would overfill the hole.
    """
    a = recipe.hole_radius
    v0 = recipe.hole_volume
    v_hemi = cap_volume(a, a)
    if v_hemi >= 0.95 * v0:
        return None
    p_gas = trapped_pressure(recipe.seal_pressure, recipe.seal_temperature,
                             recipe.forming_temperature, v0, v0 - v_hemi)
    return p_gas + recipe.tension_factor * recipe.membrane_tension / a


def _default_bounds(free, template):
    if free == "hole_radius":
        return template.hole_radius / 10.0, template.hole_radius * 10.0
    t_ratio = template.forming_temperature / template.seal_temperature
    lo = template.seal_pressure * t_ratio
    # forming pressure that drives the cap exactly to the 95% fill limit
    a = template.hole_radius
    h = max_sag(template)
    hi = 20.0 * lo + template.tension_factor * template.membrane_tension * 2 * h / (a * a + h * h)
    return max(lo, template.seal_pressure), hi * (1 - 1e-9)


def inverse_design(target_roc: float, free: str, template: ReflowRecipe,
                   bounds: Optional[tuple[float, float]] = None,
                   scan: int = 64) -> float:
    """Find the value of ``free`` for which the equilibrium curvature is ``target_roc``.

    ``free`` is ``"forming_pressure"`` or ``"hole_radius"``. The bracket
    is scanned for sign changes and each is refined with Brent's method.
    ``R`` is not monotone in the forming pressure (it passes through a
    minimum ``R = a`` at the hemisphere), so several solutions can exist;
    roots on the same branch as the template (cap deeper or shallower than
    a hemisphere) are preferred, then the one nearest the template value.
    """
    if free not in _FREE_VARIABLES:
        raise ValueError(f"free variable must be one of {_FREE_VARIABLES}, got {free!r}")
    if not target_roc > 0:
        raise DomainError("target radius must be positive")
    lo, hi = bounds if bounds is not None else _default_bounds(free, template)
    if not 0 < lo < hi:
        raise DomainError(f"invalid bounds ({lo!r}, {hi!r})")

    def roc_minus_target(x):
        res = equilibrium_deformation(replace(template, **{free: x}))
        return (math.inf if res.roc is FLAT else res.roc) - target_roc

    if free == "hole_radius":
        grid = np.geomspace(lo, hi, scan)
    else:
        grid = np.linspace(lo, hi, scan)
        p_hemi = hemisphere_pressure(template)
        if p_hemi is not None and lo < p_hemi < hi:
            grid = np.sort(np.append(grid, p_hemi))
    scan = grid.size
    vals = np.empty(scan)
    for i, x in enumerate(grid):
        try:
            vals[i] = roc_minus_target(float(x))
        except (ValueError, RuntimeError):
            vals[i] = np.nan

    roots = []
    for i in range(scan - 1):
        va, vb = vals[i], vals[i + 1]
        if np.isnan(va) or np.isnan(vb):
            continue
        if va == 0:
            roots.append(float(grid[i]))
        elif va * vb < 0 and np.isfinite(va * vb):
            roots.append(brentq(roc_minus_target, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-12))
        elif np.isinf(va) and vb < 0:
            # flat on the left edge: bisect on the sign only
            roots.append(brentq(lambda x: 1.0 if np.isinf(roc_minus_target(x))
                                else roc_minus_target(x), grid[i], grid[i + 1],
                                xtol=1e-15, rtol=1e-12))
    if not roots and vals[-1] == 0:
        roots.append(float(grid[-1]))
    if not roots:
        finite = vals[np.isfinite(vals)] + target_roc
        achievable = (float(finite.min()), float(finite.max())) if finite.size else None
        span = "none" if achievable is None else \
            f"{achievable[0] * 1e3:.4g}-{achievable[1] * 1e3:.4g} mm"
        raise UnachievableTargetError(
            f"target R = {target_roc * 1e3:.4g} mm is not reachable by varying {free} "
            f"over [{lo:.4g}, {hi:.4g}]; achievable R: {span}", achievable)
    start = getattr(template, free)
    try:
        deep = _is_deep(template)
        same = [x for x in roots if _is_deep(replace(template, **{free: x})) == deep]
    except (ValueError, RuntimeError):
        same = []
    return min(same or roots, key=lambda x: abs(x - start))


def _is_deep(recipe):
    # branch of R(P_ext): past the hemisphere (h > a) or not
    return equilibrium_deformation(recipe).sag > recipe.hole_radius


# -- furnace schedule ---------------------------------------------------------

@dataclass(frozen=True)
class AnnealProfile:
    """Thermal limits of the glass and furnace. SI units (K, K/s, s).

    Defaults describe borosilicate D263: annealing point 557 C, strain
    point 529 C.
    """

    ambient_temperature: float = celsius(25.0)
    heating_rate: float = 5.0 / MINUTE
    pressurize_time: float = 5 * MINUTE
    forming_hold: float = 30 * MINUTE
    annealing_point: float = celsius(557.0)
    anneal_cooling_rate: float = 3.0 / MINUTE
    anneal_hold: float = 30 * MINUTE
    strain_point: float = celsius(529.0)
    strain_cooling_rate: float = 2.0 / MINUTE
    max_cooling_rate: float = 10.0 / MINUTE


@dataclass(frozen=True)
class Segment:
    kind: str
    start_temperature: float
    end_temperature: float
    duration: float
    pressure: float

    @property
    def ramp_rate(self) -> float:
        """Signed rate [K/s]; zero for holds and zero-length segments."""
        if self.duration == 0:
            return 0.0
        return (self.end_temperature - self.start_temperature) / self.duration


@dataclass(frozen=True)
class FurnaceSchedule:
    segments: tuple[Segment, ...]

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    def __len__(self):
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)


def _ramp(kind, t0, t1, rate, pressure):
    return Segment(kind, t0, t1, abs(t1 - t0) / rate, pressure)


def anneal_schedule(recipe: ReflowRecipe, profile: AnnealProfile = AnnealProfile()) -> FurnaceSchedule:
    """Heat, seal, form, anneal and cool: the seven-segment furnace program."""
    tf = recipe.forming_temperature
    if not tf >= profile.annealing_point >= profile.strain_point > profile.ambient_temperature:
        raise DomainError(
            "need forming temperature >= annealing point >= strain point > ambient")
    p0, pe = recipe.seal_pressure, recipe.forming_pressure
    amb = profile.ambient_temperature
    segs = (
        _ramp("heat", amb, tf, profile.heating_rate, p0),
        Segment("pressurize", tf, tf, profile.pressurize_time, pe),
        Segment("form", tf, tf, profile.forming_hold, pe),
        _ramp("anneal-cool", tf, profile.annealing_point, profile.anneal_cooling_rate, pe),
        Segment("anneal-hold", profile.annealing_point, profile.annealing_point,
                profile.anneal_hold, pe),
        _ramp("strain-cool", profile.annealing_point, profile.strain_point,
              profile.strain_cooling_rate, pe),
        _ramp("fast-cool", profile.strain_point, amb, profile.max_cooling_rate, pe),
    )
    return FurnaceSchedule(segs)


def _per_min(rate):
    return f"{rate * MINUTE:g} C/min"


def validate_schedule(schedule: FurnaceSchedule,
                      profile: AnnealProfile = AnnealProfile(),
                      rate_tol: float = 1e-9) -> list[str]:
    """Check a schedule against the glass limits. Returns a list of violations."""
    problems = []
    segs = schedule.segments
    for i, (s0, s1) in enumerate(zip(segs, segs[1:])):
        if abs(s0.end_temperature - s1.start_temperature) > 1e-9:
            problems.append(f"segment {i + 1} ends at {s0.end_temperature - ZERO_CELSIUS:g} C "
                            f"but segment {i + 2} starts at {s1.start_temperature - ZERO_CELSIUS:g} C")
    for i, s in enumerate(segs, 1):
        rate = s.ramp_rate
        if rate > profile.heating_rate * (1 + rate_tol):
            problems.append(f"segment {i} ({s.kind}) heats at {_per_min(rate)}; "
                            f"limit {_per_min(profile.heating_rate)}")
        if rate < 0:
            cool = -rate
            if s.start_temperature > profile.annealing_point:
                limit, where = profile.anneal_cooling_rate, "above the annealing point"
            elif s.start_temperature > profile.strain_point:
                limit, where = profile.strain_cooling_rate, "between annealing and strain points"
            else:
                limit, where = profile.max_cooling_rate, "below the strain point"
            if cool > limit * (1 + rate_tol):
                problems.append(f"segment {i} ({s.kind}) cools at {_per_min(cool)} {where}; "
                                f"limit {_per_min(limit)}")
            if s.start_temperature > profile.annealing_point > s.end_temperature:
                problems.append(f"segment {i} ({s.kind}) cools through the annealing point "
                                "without a hold")
    holds = [s for s in segs if s.duration > 0 and s.ramp_rate == 0
             and abs(s.start_temperature - profile.annealing_point) < 1e-9]
    if not any(s.duration >= profile.anneal_hold * (1 - rate_tol) for s in holds):
        problems.append(f"no hold of at least {profile.anneal_hold / MINUTE:g} min at the "
                        f"annealing point {profile.annealing_point - ZERO_CELSIUS:g} C")
    formed = [i for i, s in enumerate(segs) if s.kind in ("pressurize", "form")]
    if formed:
        p = segs[formed[0]].pressure
        for i, s in enumerate(segs[formed[0]:], formed[0] + 1):
            if s.pressure != p:
                problems.append(f"segment {i} ({s.kind}) pressure {s.pressure / MBAR:g} mbar "
                                f"differs from the forming pressure {p / MBAR:g} mbar")
    return problems
