"""Profilometer line-scan analysis: figure fits, rms roughness, residual spectra.

Circle fits are parametrised by the apex ``(x_c, z_a)`` and the signed
curvature ``kappa = 1/R`` (centre at ``(x_c, z_a + 1/kappa)``). With

    u = kappa * ((x - x_c)^2 + (z - z_a)^2) - 2 (z - z_a)

the signed orthogonal distance to the circle is ``-u / (1 + sqrt(1 + kappa u))``,
which stays well conditioned for nearly flat arcs where the centre is many
orders of magnitude further away than the sag. Residuals are positive for
points above the fitted surface near the apex.

Synthetic profiles draw noise from numpy's Philox4x32-10 counter-based
generator (``numpy.random.Philox``) seeded with the integer seed, so a
fixture is reproducible from its seed alone.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import solve_triangular
from scipy.optimize import minimize_scalar

from .cqed import scattering_loss
from .errors import DomainError, FitError, RankDeficientError
from .optics import FLAT

MIN_SAMPLES = 8


@dataclass(frozen=True, eq=False)
class SurfaceProfile:
    """A 1-D line scan: lateral positions and heights, both in metres."""

    x: np.ndarray
    z: np.ndarray
    field_of_view: Optional[float] = None
    sample_id: str = ""

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        z = np.asarray(self.z, dtype=float)
        if x.ndim != 1 or x.shape != z.shape:
            raise DomainError("positions and heights must be 1-D arrays of equal length")
        if x.size < MIN_SAMPLES:
            raise DomainError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DomainError("profile contains non-finite values")
        if np.any(np.diff(x) <= 0):
            raise DomainError("positions must be strictly increasing")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z)

    def __len__(self):
        return self.x.size

    @property
    def window(self) -> float:
        return float(self.x[-1] - self.x[0])


@dataclass(frozen=True, eq=False)
class FitResult:
    """Outcome of a figure fit.

    ``params`` holds ``center_x``, ``center_z``, ``radius`` (and
    ``curvature``) for circles, or ``coefficients`` (Legendre, over the
    positions mapped to [-1, 1]) with ``x_mid``/``x_half`` for polynomials.
    """

    kind: str
    params: dict
    residuals: np.ndarray = field(repr=False)
    rms: float
    converged: bool = True
    fallback: bool = False
    iterations: int = 0

    @property
    def radius(self):
        return self.params.get("radius")


@dataclass(frozen=True, eq=False)
class PeriodogramReport:
    period: Optional[float]
    fraction: float
    artifact: bool
    frequencies: np.ndarray = field(default=None, repr=False)
    fractions: np.ndarray = field(default=None, repr=False)


def rms_roughness(residuals) -> float:
    """Root-mean-square of the residuals (no mean removal)."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise DomainError("rms of an empty residual set is undefined")
    return float(np.sqrt(np.mean(r * r)))


def _normalise(profile):
    x0 = float(np.mean(profile.x))
    z0 = float(np.mean(profile.z))
    s = float(np.max(np.abs(profile.x - x0)))
    return x0, z0, s, (profile.x - x0) / s, (profile.z - z0) / s


def _circle_residuals(p, X, Z, jacobian=False):
    xc, za, k = p
    dx = X - xc
    dz = Z - za
    u = k * (dx * dx + dz * dz) - 2.0 * dz
    s = np.sqrt(np.maximum(1.0 + k * u, 0.0))
    res = -u / (1.0 + s)
    if not jacobian:
        return res
    den = (1.0 + s) ** 2
    dr_du = -((1.0 + s) - u * k / (2.0 * s)) / den
    dr_dk = u * u / (2.0 * s * den)
    J = np.column_stack((dr_du * (-2.0 * k * dx),
                         dr_du * (2.0 - 2.0 * k * dz),
                         dr_du * (dx * dx + dz * dz) + dr_dk))
    return res, J


def _algebraic_circle(X, Z):
    # A (X^2 + Z^2) + B X - 2 Z + D = 0, linear in (A, B, D)
    M = np.column_stack((X * X + Z * Z, X, np.ones_like(X)))
    (A, B, D), *_ = np.linalg.lstsq(M, 2.0 * Z, rcond=None)
    if A == 0:
        raise ZeroDivisionError
    xc = -B / (2.0 * A)
    q = A * A * xc * xc - A * D
    if 1.0 + q <= 0:
        raise ValueError("algebraic fit gave an imaginary radius")
    root = math.sqrt(1.0 + q)
    return np.array([xc, -(A * xc * xc - D) / (1.0 + root), A / root])


def _parabola_init(X, Z):
    c = np.polynomial.polynomial.polyfit(X, Z, 2)
    if c[2] == 0:
        return np.array([0.0, c[0], 0.0])
    xc = -c[1] / (2 * c[2])
    za = c[0] + c[1] * xc + c[2] * xc * xc
    return np.array([xc, za, 2 * c[2]])


def _circle_result(p, x0, z0, s, res, it, converged, fallback=False):
    xc, za, k = p
    radius = s / abs(k) if k != 0 else FLAT
    params = {"center_x": x0 + s * xc, "apex_z": z0 + s * za, "curvature": k / s,
              "radius": radius,
              "center_z": z0 + s * za + (s / k if k != 0 else math.inf)}
    r = s * res
    return FitResult("circle", params, r, rms_roughness(r), converged, fallback, it)


def _parabola_fallback(profile):
    x0 = float(np.mean(profile.x))
    c = np.polynomial.polynomial.polyfit(profile.x - x0, profile.z, 2)
    resid = profile.z - np.polynomial.polynomial.polyval(profile.x - x0, c)
    radius = FLAT if c[2] == 0 else 1.0 / (2.0 * abs(c[2]))
    params = {"radius": radius, "curvature": 2.0 * c[2], "coefficients": c, "x_mid": x0}
    return FitResult("circle", params, resid, rms_roughness(resid), True, True, 0)


def fit_circle(profile: SurfaceProfile, noise_floor: float = 0.3e-9,
               sag_factor: float = 10.0, max_iter: int = 100,
               tol: float = 1e-13) -> FitResult:
    """Orthogonal-distance circle fit of a line scan.

    An algebraic fit seeds a Levenberg-damped Gauss-Newton refinement.
    If the quadratic sag across the window does not exceed
    ``sag_factor * noise_floor`` the arc is indistinguishable from a
    parabola; the result then comes from a quadratic fit with
    ``R = 1/(2 c2)`` and ``fallback=True``.

    Raises
    ------
    FitError
        If the refinement does not converge in ``max_iter`` steps; the
        initial estimate is attached as ``exc.initial``.
    """
    x0, z0, s, X, Z = _normalise(profile)
    c2 = np.polynomial.polynomial.polyfit(X, Z, 2)[2]
    if abs(c2) * s <= sag_factor * noise_floor:
        return _parabola_fallback(profile)

    try:
        p = _algebraic_circle(X, Z)
    except (ZeroDivisionError, ValueError):
        p = _parabola_init(X, Z)
    res, J = _circle_residuals(p, X, Z, jacobian=True)
    cost = float(res @ res)
    initial = _circle_result(p, x0, z0, s, res, 0, False)

    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ res
        H = J.T @ J
        d = np.sqrt(np.maximum(np.diag(H), 1e-300))
        while True:
            A = np.vstack((J, math.sqrt(lam) * np.diag(d)))
            b = np.concatenate((-res, np.zeros(3)))
            step, *_ = np.linalg.lstsq(A, b, rcond=None)
            p_new = p + step
            res_new = _circle_residuals(p_new, X, Z)
            cost_new = float(res_new @ res_new)
            if cost_new <= cost or lam > 1e12:
                break
            lam *= 10.0
        if cost_new > cost:
            # no descent direction left at this damping: at the optimum
            converged = np.linalg.norm(g) <= 1e-10 * max(1.0, math.sqrt(cost)) * X.size
            break
        small_step = np.all(np.abs(step) <= tol * (np.abs(p) + tol))
        small_gain = cost - cost_new <= 1e-15 * cost + 1e-300
        p, cost = p_new, cost_new
        res, J = _circle_residuals(p, X, Z, jacobian=True)
        lam = max(lam / 10.0, 1e-12)
        if small_step or small_gain:
            converged = True
            break
    if not converged:
        raise FitError(f"circle fit did not converge in {max_iter} iterations", initial)
    return _circle_result(p, x0, z0, s, res, it, True)


def fit_polynomial(profile: SurfaceProfile, degree: int = 6) -> FitResult:
    """Least-squares polynomial of ``degree`` in the window-normalised position.

    Solved through a QR factorisation of the Legendre design matrix, so the
    normal equations are never formed. Residuals are vertical.
    """
    if degree < 1:
        raise DomainError("degree must be at least 1")
    n = len(profile)
    if n <= degree + 1:
        raise DomainError(f"{n} samples cannot constrain a degree-{degree} fit")
    mid = 0.5 * (profile.x[0] + profile.x[-1])
    half = 0.5 * (profile.x[-1] - profile.x[0])
    t = (profile.x - mid) / half
    V = legendre.legvander(t, degree)
    Q, R = np.linalg.qr(V)
    diag = np.abs(np.diag(R))
    if diag.min() <= diag.max() * max(V.shape) * np.finfo(float).eps * 10:
        raise RankDeficientError(
            f"design matrix is rank deficient (positions too clustered for degree {degree})")
    coef = solve_triangular(R, Q.T @ profile.z)
    resid = profile.z - V @ coef
    params = {"coefficients": coef, "degree": degree, "x_mid": mid, "x_half": half}
    return FitResult(f"polynomial-{degree}", params, resid, rms_roughness(resid))


def _explained_fraction(t, y, freqs, chunk=256):
    # floating-mean sinusoid fit at each frequency; y is mean-removed
    tss = float(y @ y)
    out = np.empty(freqs.size)
    for i in range(0, freqs.size, chunk):
        w = 2.0 * np.pi * freqs[i:i + chunk, None]
        c = np.cos(w * t)
        s = np.sin(w * t)
        c -= c.mean(axis=1, keepdims=True)
        s -= s.mean(axis=1, keepdims=True)
        cc = np.einsum("ij,ij->i", c, c)
        ss = np.einsum("ij,ij->i", s, s)
        cs = np.einsum("ij,ij->i", c, s)
        yc = c @ y
        ys = s @ y
        det = cc * ss - cs * cs
        with np.errstate(divide="ignore", invalid="ignore"):
            a = (ss * yc - cs * ys) / det
            b = (cc * ys - cs * yc) / det
            frac = (a * yc + b * ys) / tss
        out[i:i + chunk] = np.where(det > 1e-12 * cc * ss, frac, 0.0)
    return np.clip(out, 0.0, 1.0)


def residual_periodogram(residuals, positions, threshold: float = 0.25,
                         oversample: int = 10) -> PeriodogramReport:
    """Least-squares spectrum of fit residuals on a possibly irregular grid.

    Periods from twice the median spacing up to twice the window are
    searched; the best one is refined between its grid neighbours. The
    reported fraction is the share of residual variance a single
    sinusoid at that period explains, and ``artifact`` is set when it
    exceeds ``threshold``.
    """
    y = np.asarray(residuals, dtype=float)
    t = np.asarray(positions, dtype=float)
    if y.shape != t.shape or y.ndim != 1:
        raise DomainError("residuals and positions must be 1-D and equal length")
    if y.size < 16:
        raise DomainError(f"need at least 16 samples, got {y.size}")
    dt = np.diff(t)
    spacing = float(np.median(dt))
    if not spacing > 0 or np.any(dt <= 0):
        raise DomainError("positions must be strictly increasing with non-zero spacing")
    y = y - y.mean()
    if not float(y @ y) > 0:
        return PeriodogramReport(None, 0.0, False)
    t = t - t[0]
    window = float(t[-1])
    f_lo = 1.0 / (2.0 * window)
    f_hi = 1.0 / (2.0 * spacing)
    df = 1.0 / (oversample * window)
    freqs = np.arange(f_lo, f_hi + 0.5 * df, df)
    fracs = _explained_fraction(t, y, freqs)
    k = int(np.argmax(fracs))
    a = freqs[max(k - 1, 0)]
    b = freqs[min(k + 1, freqs.size - 1)]
    best_f, best = freqs[k], fracs[k]
    if b > a:
        opt = minimize_scalar(lambda f: -_explained_fraction(t, y, np.array([f]))[0],
                              bounds=(a, b), method="bounded",
                              options={"xatol": 1e-9 * best_f})
        if -opt.fun > best:
            best_f, best = float(opt.x), float(-opt.fun)
    return PeriodogramReport(1.0 / best_f, float(best), bool(best > threshold), freqs, fracs)


def roughness_to_loss(fit: FitResult, wavelength: float, form: str = "exact") -> float:
    """Scatter loss implied by the rms of a converged fit."""
    if not fit.converged:
        raise DomainError("fit did not converge; its rms is not a roughness estimate")
    return scattering_loss(fit.rms, wavelength, form)


def synthesize_profile(roc: float = 1e-3, window: float = 100e-6, samples: int = 1000,
                       period: float = 50e-6, amplitude: float = 0.0,
                       phase: float = math.pi / 2, noise: float = 0.0, seed: int = 0,
                       jitter: float = 0.0, apex: float = 0.0) -> SurfaceProfile:
    """Concave spherical surface + one sinusoidal ripple + white noise.

    Parameters
    ----------
    roc : float
        Radius of curvature [m]; ``FLAT`` gives a plane.
    window, samples :
        Scan length [m] and number of samples, centred on the apex offset
        ``apex``.
    period, amplitude, phase :
        Ripple ``amplitude * sin(2 pi x / period + phase)``.
    noise : float
        Standard deviation of additive Gaussian height noise [m].
    jitter : float
        Random displacement of each position, as a fraction of the nominal
        spacing (uniform in +-jitter/2).
    """
    rng = np.random.Generator(np.random.Philox(seed))
    x = np.linspace(-window / 2, window / 2, samples)
    if jitter:
        x = x + jitter * (x[1] - x[0]) * rng.uniform(-0.5, 0.5, samples)
    xa = x - apex
    if roc is FLAT:
        z = np.zeros_like(x)
    else:
        z = xa * xa / (roc + np.sqrt(roc * roc - xa * xa))
    if amplitude:
        z = z + amplitude * np.sin(2 * np.pi * x / period + phase)
    if noise:
        z = z + rng.normal(0.0, noise, samples)
    return SurfaceProfile(x, z, field_of_view=window, sample_id=f"synthetic-{seed}")


def fig1_composite(seed: int = 0, samples: int = 1000) -> SurfaceProfile:
    """Stand-in for the published profile: R = 1 mm, 100 um window, 50 um ripple.

    Ripple amplitude 0.73 nm with 0.3 nm white noise gives a circle-fit rms
    near 0.6 nm.
    """
    return synthesize_profile(roc=1e-3, window=100e-6, samples=samples, period=50e-6,
                              amplitude=0.73e-9, noise=0.3e-9, seed=seed)


# -- CSV interface (x in um, z in nm) -----------------------------------------

def read_profile_csv(path) -> SurfaceProfile:
    path = Path(path)
    xs, zs = [], []
    header_seen = False
    with path.open(encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                if [c.strip() for c in line.split(",")] != ["x_um", "z_nm"]:
                    raise DomainError(f"{path}:{lineno}: expected header 'x_um,z_nm', got {line!r}")
                header_seen = True
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise DomainError(f"{path}:{lineno}: expected 2 columns, got {len(parts)}")
            try:
                xs.append(float(parts[0]) * 1e-6)
                zs.append(float(parts[1]) * 1e-9)
            except ValueError:
                raise DomainError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
    if not header_seen:
        raise DomainError(f"{path}: missing 'x_um,z_nm' header")
    return SurfaceProfile(np.array(xs), np.array(zs), sample_id=path.stem)


def write_profile_csv(path, profile: SurfaceProfile, comment: str = "") -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_um", "z_nm"])
        for x, z in zip(profile.x, profile.z):
            w.writerow([repr(float(x) * 1e6), repr(float(z) * 1e9)])


def write_residuals_csv(path, profile: SurfaceProfile, *fits: FitResult) -> None:
    """Plot-ready residual table: ``x_um`` then one ``<kind>_nm`` column per fit."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x_um"] + [f"{f.kind}_nm" for f in fits])
        for i, x in enumerate(profile.x):
            w.writerow([f"{x * 1e6:.6f}"] + [f"{f.residuals[i] * 1e9:.6f}" for f in fits])
