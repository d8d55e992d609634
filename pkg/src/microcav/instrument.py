"""Simulation and inversion of the two bench measurements.

* Linewidth: a laser carrying phase-modulation sidebands at a known
  offset ``f_mod`` is swept across a cavity resonance. The sidebands mark
  ``+-f_mod`` on the otherwise uncalibrated sweep axis, so fitting three
  Lorentzians gives the linewidth in Hz.
* Radius of curvature: a tightly focused fibre mode is retro-reflected by
  the curved mirror while the mirror is scanned along the axis. The
  coupling back into the fibre peaks where the wavefront radius equals the
  mirror radius, which happens at two points ``sqrt(R^2 - 4 z_R^2)`` apart.

Noise comes from ``numpy.random.Philox`` seeded with the given integer.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.signal import find_peaks

from .errors import CalibrationError, DomainError, FitError, PeakDetectionError
from .optics import FLAT, BeamParams, Radius, curvature, roc_from_separation

MIN_TRACE = 64


def _rng(seed):
    return np.random.Generator(np.random.Philox(seed))


def moving_average(y, window: int):
    """Centred moving average; the ends use the shrunken window."""
    y = np.asarray(y, dtype=float)
    if window <= 1:
        return y.copy()
    kernel = np.ones(window)
    num = np.convolve(y, kernel, mode="same")
    den = np.convolve(np.ones_like(y), kernel, mode="same")
    return num / den


# -- linewidth ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SweepTrace:
    u: np.ndarray
    s: np.ndarray
    truth: Optional[dict] = None

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if u.ndim != 1 or u.shape != s.shape:
            raise DomainError("sweep coordinate and signal must be 1-D and equal length")
        if u.size < MIN_TRACE:
            raise DomainError(f"need at least {MIN_TRACE} samples, got {u.size}")
        if np.any(s < 0):
            raise DomainError("signal must be non-negative")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", s)

    def rescaled(self, factor: float) -> "SweepTrace":
        """Same trace on a sweep axis stretched by ``factor``."""
        return SweepTrace(self.u * factor, self.s, self.truth)


@dataclass(frozen=True, eq=False)
class SweepFit:
    linewidth: float
    linewidth_std: float
    slope: float
    residual_rms: float
    params: dict
    covariance: np.ndarray = field(repr=False)


def lorentzian(x, fwhm):
    return 1.0 / (1.0 + (2.0 * x / fwhm) ** 2)


def triplet(u, amp, center, fwhm, spacing, ratio, offset=0.0):
    """Carrier plus two equal sidebands at ``center +- spacing`` (sweep units)."""
    return offset + amp * (lorentzian(u - center, fwhm)
                           + ratio * (lorentzian(u - center - spacing, fwhm)
                                      + lorentzian(u - center + spacing, fwhm)))


def simulate_sweep(linewidth: float, f_mod: float, slope: float, depth: float = 0.25,
                   noise: float = 0.0, seed: int = 0, samples: int = 2001,
                   span: Optional[float] = None, center: float = 0.0,
                   background: Optional[float] = None) -> SweepTrace:
    """Transmission of a modulated laser swept across a cavity resonance.

    Parameters
    ----------
    linewidth : float
        Cavity FWHM [Hz].
    f_mod : float
        Modulation frequency [Hz].
    slope : float
        Sweep calibration [Hz per unit of ``u``], unknown to the fitter.
    depth : float
        Sideband-to-carrier power ratio.
    noise : float
        Additive Gaussian noise relative to the unit carrier peak. The
        detector clips at zero.
    span : float, optional
        Half-range of the sweep [Hz]; defaults to ``1.5 f_mod + 5 linewidth``.
    background : float, optional
        Constant detector dark level; defaults to ``5 * noise`` so that
        clipping (which would bias the wings) practically never happens.
    """
    if not (linewidth > 0 and f_mod > 0 and slope > 0):
        raise DomainError("linewidth, f_mod and slope must be positive")
    if depth < 0 or noise < 0:
        raise DomainError("depth and noise must be non-negative")
    if span is None:
        span = 1.5 * f_mod + 5.0 * linewidth
    u = center + np.linspace(-span, span, samples) / slope
    if background is None:
        background = 5.0 * noise
    s = triplet(u, 1.0, center, linewidth / slope, f_mod / slope, depth, background)
    if noise:
        s = np.clip(s + _rng(seed).normal(0.0, noise, samples), 0.0, None)
    truth = dict(linewidth=linewidth, f_mod=f_mod, slope=slope, depth=depth,
                 noise=noise, seed=seed, background=background)
    return SweepTrace(u, s, truth)


def _noise_level(s):
    # robust white-noise sigma from first differences
    d = np.diff(s)
    return float(1.4826 * np.median(np.abs(d - np.median(d))) / math.sqrt(2.0))


def _find_three(u, s, smooth):
    sm = moving_average(s, smooth)
    prominence = 0.02 * float(sm.max()) + 5.0 * _noise_level(s) / math.sqrt(max(smooth, 1))
    idx, _ = find_peaks(sm, prominence=prominence)
    if idx.size < 3:
        raise CalibrationError(
            f"found {idx.size} resolvable peak(s), need carrier plus two sidebands; "
            "modulation frequency too small compared with the linewidth or no sidebands")
    top = np.sort(idx[np.argsort(sm[idx])[-3:]])
    return top, sm


def _half_width(u, sm, k):
    half = 0.5 * sm[k]
    left = k
    while left > 0 and sm[left] > half:
        left -= 1
    right = k
    while right < sm.size - 1 and sm[right] > half:
        right += 1
    return abs(u[right] - u[left])


def fit_sweep(trace: SweepTrace, f_mod: float, smooth: int = 5) -> SweepFit:
    """Recover the cavity linewidth [Hz] from a sideband-calibrated sweep.

    Peaks are located on a ``smooth``-sample moving average; the three
    highest seed a least-squares fit of carrier + two sidebands of common
    width and a constant background. The sideband spacing fixes the sweep
    slope at ``f_mod`` per spacing.
    """
    if not f_mod > 0:
        raise DomainError("f_mod must be positive")
    u, s = trace.u, trace.s
    (i1, i2, i3), sm = _find_three(u, s, smooth)
    spacing0 = 0.5 * (u[i3] - u[i1])
    amp0 = float(sm[i2])
    ratio0 = 0.5 * (sm[i1] + sm[i3]) / amp0
    fwhm0 = min(_half_width(u, sm, i2), 0.5 * abs(spacing0))
    x0 = np.array([amp0, u[i2], fwhm0, spacing0, ratio0, float(np.min(sm))])

    def resid(p):
        return triplet(u, *p) - s

    sol = least_squares(resid, x0, x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15,
                        max_nfev=2000)
    if not sol.success:
        raise FitError(f"sweep fit did not converge: {sol.message}", initial=x0)
    amp, center, fwhm, spacing, ratio, offset = sol.x
    fwhm, spacing = abs(fwhm), abs(spacing)
    if spacing <= fwhm:
        raise CalibrationError(
            f"fitted sideband spacing {spacing:.4g} does not exceed the linewidth "
            f"{fwhm:.4g} (sweep units); sidebands unresolved")
    dof = max(u.size - x0.size, 1)
    s2 = 2.0 * sol.cost / dof
    J = sol.jac
    try:
        cov = np.linalg.inv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        cov = np.full((x0.size, x0.size), np.nan)
    slope = f_mod / spacing
    linewidth = fwhm * slope
    grad = np.zeros(x0.size)
    grad[2] = f_mod / spacing
    grad[3] = -fwhm * f_mod / spacing**2
    lw_std = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    params = dict(amplitude=amp, center=center, fwhm_u=fwhm, spacing_u=spacing,
                  ratio=ratio, offset=offset)
    return SweepFit(linewidth, lw_std, slope, float(math.sqrt(2.0 * sol.cost / u.size)),
                    params, cov)


# -- radius of curvature ------------------------------------------------------

def _overlap(w_a, c_a, w_b, c_b, k):
    """Power coupling of two co-axial TEM00 beams from spot sizes and curvatures."""
    ratio = w_a / w_b + w_b / w_a
    phase = k * w_a * w_b * (c_a - c_b)
    return 4.0 / (ratio * ratio + 0.25 * phase * phase)


def mode_coupling(beam_a: BeamParams, beam_b: BeamParams, plane: float = 0.0) -> float:
    """Fraction of power in ``beam_a`` that couples into ``beam_b``.

    Both beams are evaluated at the axial coordinate ``plane``. Symmetric
    in its arguments, and 1 only when spot size and wavefront curvature
    agree.
    """
    if not math.isclose(beam_a.wavelength, beam_b.wavelength, rel_tol=1e-12):
        raise DomainError("mode overlap needs equal wavelengths")
    return float(_overlap(beam_a.spot_size(plane), beam_a.curvature(plane),
                          beam_b.spot_size(plane), beam_b.curvature(plane),
                          beam_a.wavenumber))


@dataclass(frozen=True, eq=False)
class RetroScan:
    """Coupled power versus commanded mirror position (``z`` in metres)."""

    z: np.ndarray
    coupling: np.ndarray
    beam: BeamParams
    single_maximum: bool = False

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        c = np.asarray(self.coupling, dtype=float)
        if z.shape != c.shape or z.ndim != 1:
            raise DomainError("positions and coupling must be 1-D and equal length")
        if np.any(c > 1 + 1e-12) or np.any(c < 0):
            raise DomainError("coupling must lie in [0, 1]")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "coupling", c)


@dataclass(frozen=True)
class RocMeasurement:
    roc: float
    uncertainty: float
    peaks: tuple[float, float]
    peak_std: tuple[float, float]


def retro_coupling(roc: Radius, beam: BeamParams, z) -> np.ndarray:
    """Fibre coupling with the mirror vertex at axial positions ``z``.

    In the unfolded picture the mirror is a lens of focal length ``R/2``:
    the returning beam has ``1/q' = 1/q - 2/R`` at the mirror, is
    propagated back to the focus plane and overlapped with the fibre
    mode's waist there.
    """
    d = np.asarray(z, dtype=float) - beam.waist_position
    zr = beam.rayleigh_length
    q = d + 1j * zr
    q_back = 1.0 / (1.0 / q - 2.0 * curvature(roc)) + d
    inv = 1.0 / q_back
    w_back = np.sqrt(-beam.wavelength / (math.pi * inv.imag))
    c_back = inv.real
    return _overlap(w_back, c_back, beam.waist, 0.0, beam.wavenumber)


def retro_scan(roc: Radius, beam: BeamParams, z_range: Optional[tuple[float, float]] = None,
               samples: Optional[int] = None, position_noise: float = 0.0,
               seed: int = 0) -> RetroScan:
    """Simulate the retro-reflection scan of a mirror through the beam focus.

    Parameters
    ----------
    roc : float or FLAT
        Mirror radius of curvature [m] (concave towards the beam).
    beam : BeamParams
        Focused probe beam.
    z_range : (float, float), optional
        Commanded mirror positions [m]. Defaults to a window from 5 z_R
        before the focus to 10 z_R beyond the far matching point.
    samples : int, optional
        Defaults to a spacing of z_R/100.
    position_noise : float
        Standard deviation [m] of the true mirror position about each
        commanded position; the scan records the commanded value.
    """
    zr = beam.rayleigh_length
    z0 = beam.waist_position
    single = roc is FLAT or roc <= 2.0 * zr
    far = (0.5 * (roc + math.sqrt(roc * roc - 4 * zr * zr)) if not single
           else (0.0 if roc is FLAT else zr))
    if z_range is None:
        z_range = (z0 - 5.0 * zr, z0 + far + 10.0 * zr)
    lo, hi = z_range
    if not hi > lo:
        raise DomainError("z range must be increasing")
    if not single:
        near = 0.5 * (roc - math.sqrt(roc * roc - 4 * zr * zr))
        if not (lo < z0 + near and z0 + far < hi):
            raise DomainError(
                f"z range [{lo:.6g}, {hi:.6g}] m does not contain both matching points "
                f"({z0 + near:.6g}, {z0 + far:.6g}) m")
    if samples is None:
        samples = int(math.ceil((hi - lo) / (zr / 100.0))) + 1
    z = np.linspace(lo, hi, samples)
    actual = z + _rng(seed).normal(0.0, position_noise, samples) if position_noise else z
    return RetroScan(z, np.minimum(retro_coupling(roc, beam, actual), 1.0), beam, single)


def _vertex(z, y):
    # quadratic least squares about the window centre; vertex and its std
    zc = z.mean()
    t = z - zc
    V = np.column_stack((np.ones_like(t), t, t * t))
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    c0, c1, c2 = coef
    if not c2 < 0:
        raise PeakDetectionError("peak region is not concave; cannot refine the maximum")
    vertex = -c1 / (2.0 * c2)
    dof = z.size - 3
    std = 0.0
    if dof > 0:
        r = y - V @ coef
        cov = np.linalg.inv(V.T @ V) * float(r @ r) / dof
        g = np.array([0.0, -1.0 / (2 * c2), c1 / (2 * c2 * c2)])
        std = float(math.sqrt(max(g @ cov @ g, 0.0)))
    return zc + vertex, std


def measure_roc(scan: RetroScan, smooth: int = 1, fit_points: int = 3,
                level: Optional[float] = None, recenter: int = 3) -> RocMeasurement:
    """Radius of curvature from the two coupling maxima of a retro-scan.

    Maxima are detected on a ``smooth``-sample moving average and ranked
    by prominence. Each is refined by a least-squares parabola through the
    raw samples: ``fit_points`` samples centred on the maximum, or, when
    ``level`` is given, the contiguous samples whose smoothed value is
    above ``level`` times the peak. Fixed-size windows are re-centred on
    the fitted vertex ``recenter`` times. With noisy mirror positions use
    a wide window (a few hundred samples) so the fit averages the noise.

    The uncertainty follows from the peak-location covariance (zero for
    an exact three-point parabola).
    """
    y = moving_average(scan.coupling, smooth)
    idx, props = find_peaks(y, prominence=0.01 * float(y.max()))
    if idx.size < 2:
        raise PeakDetectionError(f"found {idx.size} coupling maximum, need two")
    # rank by prominence: noise ripples on one broad maximum are tall but not prominent
    top = np.sort(idx[np.argsort(props["prominences"])[-2:]])
    n = y.size
    locs, stds = [], []
    for k in top:
        if level is not None:
            thresh = level * y[k]
            lo = k
            while lo > 0 and y[lo - 1] >= thresh:
                lo -= 1
            hi = k + 1
            while hi < n and y[hi] >= thresh:
                hi += 1
            if hi - lo < 3:
                lo, hi = max(k - 1, 0), min(k + 2, n)
            loc, std = _vertex(scan.z[lo:hi], scan.coupling[lo:hi])
        else:
            h = max(fit_points // 2, 1)
            lo, hi = max(k - h, 0), min(k + h + 1, n)
            loc, std = _vertex(scan.z[lo:hi], scan.coupling[lo:hi])
            for _ in range(recenter if h > 1 else 0):
                k_new = int(np.searchsorted(scan.z, loc))
                if k_new == k or not lo <= k_new < hi:
                    break
                k = k_new
                lo, hi = max(k - h, 0), min(k + h + 1, n)
                try:
                    loc, std = _vertex(scan.z[lo:hi], scan.coupling[lo:hi])
                except PeakDetectionError:
                    break
        locs.append(loc)
        stds.append(std)
    sep = abs(locs[1] - locs[0])
    roc = roc_from_separation(sep, scan.beam.rayleigh_length)
    unc = sep / roc * math.hypot(stds[0], stds[1])
    return RocMeasurement(roc, unc, (locs[0], locs[1]), (stds[0], stds[1]))


NOISY_SPACING = 0.5e-6  # m
NOISY_MARGIN = 100e-6  # m
NOISY_SMOOTH = 121
NOISY_FIT_POINTS = 201


def roc_round_trip(roc: float, beam: BeamParams, position_noise: float = 0.0,
                   seed: int = 0) -> tuple[RetroScan, RocMeasurement]:
    """Simulate a retro-scan and measure it back.

    Noiseless scans use the default dense grid with three-point vertex
    refinement. With positioning noise the scan runs on a 0.5 um grid
    from 100 um before the focus to 100 um past the far matching point,
    and each maximum is located by a 201-sample parabola fit after a
    121-sample moving average.
    """
    if not position_noise:
        scan = retro_scan(roc, beam, seed=seed)
        return scan, measure_roc(scan)
    zr = beam.rayleigh_length
    far = 0.5 * (roc + math.sqrt(max(roc * roc - 4 * zr * zr, 0.0)))
    lo = beam.waist_position - NOISY_MARGIN
    hi = beam.waist_position + far + NOISY_MARGIN
    samples = int((hi - lo) / NOISY_SPACING) + 1
    scan = retro_scan(roc, beam, (lo, hi), samples, position_noise, seed)
    return scan, measure_roc(scan, smooth=NOISY_SMOOTH, fit_points=NOISY_FIT_POINTS)


# -- CSV interface ------------------------------------------------------------

def write_trace_csv(path, trace: SweepTrace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["u", "s"])
        for u, s in zip(trace.u, trace.s):
            w.writerow([repr(float(u)), repr(float(s))])


def read_trace_csv(path) -> SweepTrace:
    u, s = _read_two_columns(path, ["u", "s"])
    return SweepTrace(u, s)


def write_scan_csv(path, scan: RetroScan) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["z_um", "coupling"])
        for z, c in zip(scan.z, scan.coupling):
            w.writerow([repr(float(z) * 1e6), repr(float(c))])


def read_scan_csv(path, beam: BeamParams) -> RetroScan:
    z, c = _read_two_columns(path, ["z_um", "coupling"])
    return RetroScan(z * 1e-6, c, beam)


def _read_two_columns(path, header):
    a, b = [], []
    seen = False
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = [c.strip() for c in line.split(",")]
            if not seen:
                if cols != header:
                    raise DomainError(f"{path}:{lineno}: expected header {','.join(header)!r}")
                seen = True
                continue
            try:
                x, y = (float(c) for c in cols)
            except ValueError:
                raise DomainError(f"{path}:{lineno}: expected two numbers, got {line!r}") from None
            a.append(x)
            b.append(y)
    return np.array(a), np.array(b)
