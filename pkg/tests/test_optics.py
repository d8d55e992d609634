import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from microcav.errors import DomainError, NoMatchingPointsError, UnstableCavityError
from microcav.optics import (
    FLAT,
    BeamParams,
    CavityGeometry,
    cavity_mode,
    cavity_stability,
    matching_points_separation,
    rayleigh_length,
    roc_from_separation,
    waist_half_symmetric,
    wavefront_radius,
)

LAM = 780e-9
ZR_2UM = math.pi * (2e-6) ** 2 / LAM


# -- oracles ------------------------------------------------------------------

def _prop(d):
    return np.array([[1.0, d], [0.0, 1.0]])


def _mirror(roc):
    return np.eye(2) if roc is FLAT else np.array([[1.0, 0.0], [-2.0 / roc, 1.0]])


def abcd_eigenmode(length, roc_1, roc_2, wavelength):
    """Self-consistent q at mirror 1 from the round-trip ABCD matrix.

    Returns (waist, distance of the waist from mirror 1).
    """
    M = _mirror(roc_1) @ _prop(length) @ _mirror(roc_2) @ _prop(length)
    A, B, C, D = M.ravel()
    # q = (A q + B) / (C q + D)  ->  C q^2 + (D - A) q - B = 0
    roots = np.roots([C, D - A, -B]) if C != 0 else np.array([complex(-B / (D - A))])
    q = [r for r in roots if np.imag(r) > 0][0]
    z_r = q.imag
    return math.sqrt(wavelength * z_r / math.pi), -q.real


def scan_matching_points(roc, z_r):
    z = np.geomspace(1e-12, 10 * roc, 2_000_000)
    f = z * (1 + (z_r / z) ** 2) - roc
    idx = np.nonzero(np.sign(f[:-1]) != np.sign(f[1:]))[0]
    roots = [z[i] - f[i] * (z[i + 1] - z[i]) / (f[i + 1] - f[i]) for i in idx]
    return roots


# -- rayleigh length ----------------------------------------------------------

def test_rayleigh_length_probe_beam():
    assert rayleigh_length(2e-6, LAM) == pytest.approx(16.11e-6, rel=1e-3)


def test_rayleigh_length_identity_and_scaling():
    assert rayleigh_length(1.0, math.pi) == pytest.approx(1.0, rel=1e-15)
    assert rayleigh_length(4e-6, 4 * LAM) == pytest.approx(rayleigh_length(2e-6, LAM), rel=1e-14)


@pytest.mark.parametrize("w0, lam", [(0, LAM), (-1e-6, LAM), (1e-6, 0), (1e-6, -LAM)])
def test_rayleigh_length_rejects_non_positive(w0, lam):
    with pytest.raises(DomainError):
        rayleigh_length(w0, lam)


def test_beam_params_consistency():
    b = BeamParams(LAM, 2e-6, waist_position=1e-3)
    zr = b.rayleigh_length
    assert b.spot_size(1e-3 + zr) == pytest.approx(math.sqrt(2) * 2e-6)
    assert b.curvature(1e-3) == 0.0
    assert 1 / b.curvature(1e-3 + zr) == pytest.approx(2 * zr)
    again = BeamParams.from_q(b.q(3e-3), 3e-3, LAM)
    assert again.waist == pytest.approx(b.waist, rel=1e-12)
    assert again.waist_position == pytest.approx(b.waist_position, rel=1e-12)
    with pytest.raises(DomainError):
        BeamParams(LAM, 0.0)


# -- half-symmetric waist -----------------------------------------------------

@pytest.mark.parametrize("L, R, expected", [(2.53e-3, 5e-3, 24.9e-6), (2.075e-3, 100e-3, 59.5e-6)])
def test_waist_half_symmetric_table_cavities(L, R, expected):
    w = waist_half_symmetric(L, R, LAM)
    assert w == pytest.approx(expected, rel=2e-3)
    assert w == pytest.approx(abcd_eigenmode(L, FLAT, R, LAM)[0], rel=1e-9)


def test_waist_half_symmetric_short_cavity_limit():
    assert waist_half_symmetric(1e-12, 1e-3, LAM) < 1e-6


def test_waist_half_symmetric_errors():
    with pytest.raises(UnstableCavityError):
        waist_half_symmetric(2e-3, 1e-3, LAM)
    with pytest.raises(UnstableCavityError):
        waist_half_symmetric(1e-3, 1e-3, LAM)
    with pytest.raises(DomainError):
        waist_half_symmetric(-1e-3, 1e-3, LAM)


def test_waist_half_symmetric_matches_abcd_oracle_random():
    rng = np.random.default_rng(1)
    for _ in range(100):
        R = 10 ** rng.uniform(-4, -1)
        L = R * rng.uniform(0.01, 0.99)
        lam = rng.uniform(400e-9, 1600e-9)
        assert waist_half_symmetric(L, R, lam) == pytest.approx(
            abcd_eigenmode(L, FLAT, R, lam)[0], rel=1e-9)


def test_waist_half_symmetric_peaks_at_half_radius():
    R = 5e-3
    L = np.linspace(1e-6, R - 1e-6, 2001)
    w = np.array([waist_half_symmetric(x, R, LAM) for x in L])
    k = np.argmax(w)
    assert L[k] == pytest.approx(R / 2, rel=2e-3)
    assert np.all(np.diff(w[: k + 1]) > 0)
    assert np.all(np.diff(w[k:]) < 0)


# -- general cavity mode ------------------------------------------------------

def test_cavity_mode_reduces_to_half_symmetric():
    m = cavity_mode(CavityGeometry(2.53e-3, FLAT, 5e-3), LAM)
    assert m.waist == pytest.approx(waist_half_symmetric(2.53e-3, 5e-3, LAM), rel=1e-12)
    assert m.waist_position == pytest.approx(0.0, abs=1e-15)


def test_cavity_mode_general_matches_abcd_oracle():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 50:
        L = rng.uniform(0.1e-3, 5e-3)
        r1 = L * rng.uniform(0.3, 5.0) * rng.choice([-1, 1])
        r2 = L * rng.uniform(0.3, 5.0)
        p = (1 - L / r1) * (1 - L / r2)
        if not 1e-3 < p < 1 - 1e-3:
            continue
        m = cavity_mode(CavityGeometry(L, r1, r2), LAM)
        w, z1 = abcd_eigenmode(L, r1, r2, LAM)
        assert m.waist == pytest.approx(w, rel=1e-7)
        assert m.waist_position == pytest.approx(z1, rel=1e-6, abs=1e-12)
        checked += 1


def test_symmetric_cavity_waist_in_centre():
    m = cavity_mode(CavityGeometry(1e-3, 2e-3, 2e-3), LAM)
    assert m.waist_position == pytest.approx(0.5e-3)


@pytest.mark.parametrize("geom", [CavityGeometry(6e-3, FLAT, 5e-3), CavityGeometry(5e-3, FLAT, 5e-3),
                                  CavityGeometry(1e-3, FLAT, FLAT)])
def test_cavity_mode_rejects_unbound_geometries(geom):
    with pytest.raises(UnstableCavityError):
        cavity_mode(geom, LAM)


# -- stability ----------------------------------------------------------------

def test_stability_row1():
    rep = cavity_stability(CavityGeometry(2.075e-3, FLAT, 100e-3))
    assert rep.g1 == 1.0
    assert rep.product == pytest.approx(0.979, abs=5e-4)
    assert rep.stable


def test_stability_boundary_and_unstable():
    assert cavity_stability(CavityGeometry(5e-3, FLAT, 5e-3)).stable
    assert cavity_stability(CavityGeometry(5e-3, FLAT, 5e-3)).product == 0.0
    assert not cavity_stability(CavityGeometry(6e-3, FLAT, 5e-3)).stable


def test_flat_flat_is_g_one():
    assert cavity_stability(CavityGeometry(1e-3)).g1 == 1.0
    with pytest.raises(DomainError):
        CavityGeometry(0.0, FLAT, 1e-3)
    with pytest.raises(DomainError):
        CavityGeometry(1e-3, FLAT, 0.0)


# -- wavefront radius ---------------------------------------------------------

def test_wavefront_radius_examples():
    zr = 16.11e-6
    assert wavefront_radius(zr, zr) == pytest.approx(2 * zr)
    assert wavefront_radius(349.65e-6, zr) == pytest.approx(350.39e-6, abs=0.01e-6)
    assert wavefront_radius(0.0, zr) is FLAT
    assert wavefront_radius(1e3, zr) / 1e3 == pytest.approx(1.0, rel=1e-12)


@given(st.floats(1e-9, 1.0), st.floats(1e-7, 1e-2))
def test_wavefront_radius_lower_bound(z, zr):
    assert wavefront_radius(z, zr) >= 2 * zr * (1 - 1e-12)


# -- matching points ----------------------------------------------------------

@pytest.mark.parametrize("R, expected", [(0.7e-3, 0.69926e-3), (5e-3, 4.9999e-3)])
def test_matching_points_separation_examples(R, expected):
    zr = 16.11e-6
    s = matching_points_separation(R, zr)
    assert s == pytest.approx(expected, abs=0.01e-6)
    near, far = scan_matching_points(R, zr)
    assert s == pytest.approx(far - near, rel=1e-6)


def test_matching_points_tangency_and_errors():
    assert matching_points_separation(2 * ZR_2UM, ZR_2UM) == 0.0
    with pytest.raises(NoMatchingPointsError):
        matching_points_separation(1.9 * ZR_2UM, ZR_2UM)
    with pytest.raises(NoMatchingPointsError):
        matching_points_separation(FLAT, ZR_2UM)


def test_roc_from_separation_examples():
    zr = 16.11e-6
    assert roc_from_separation(0.69926e-3, zr) == pytest.approx(0.7e-3, abs=0.01e-6)
    assert roc_from_separation(0.0, zr) == pytest.approx(2 * zr)
    assert roc_from_separation(4.9999e-3, zr) == pytest.approx(5.0e-3, abs=0.01e-6)
    with pytest.raises(DomainError):
        roc_from_separation(-1e-6, zr)


@settings(max_examples=300)
@given(st.floats(1e-7, 1e-3), st.floats(1e-9, 1.0))
def test_matching_points_round_trip(zr, frac):
    R = 2 * zr * (1 + 1e-9) + frac * (1.0 - 2 * zr)
    s = matching_points_separation(R, zr)
    assert roc_from_separation(s, zr) == pytest.approx(R, rel=1e-12)
