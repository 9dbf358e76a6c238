import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import constant_dispersion, dense_sigma_min, plane_wave_symbol
from torusflow import spectral_curve as S
from torusflow.errors import CutoffTooLarge, EmptyZeroSet, NotOnCurve
from torusflow.fixtures import CLIFFORD_U, square_grid
from torusflow.torus_field import PeriodicField

TWO_PI = 2 * np.pi
G32 = square_grid(32)
HALF = PeriodicField.constant(G32, 0.5)
ZERO = PeriodicField.constant(G32, 0.0)


def kap(kx, ky):
    """Quasimomentum for the Bloch wavevector (kx, ky) on the square lattice."""
    return kx / TWO_PI, ky / TWO_PI


def circle_distance(samples, radius):
    pts = np.array([[s.k1, s.k2] for s in samples]) * TWO_PI
    centres = np.array(list(itertools.product(range(-2, 3), repeat=2)))
    d = np.hypot(*(pts[:, None, :] - centres[None, :, :]).transpose(2, 0, 1))
    return np.abs(d - radius).min(axis=1)


def test_free_matrix_is_block_diagonal():
    M = S.assemble_bloch(ZERO, kap(0.3, 0.1), 2)
    n = M.shape[0] // 2
    assert np.abs(M[:n, :n]).max() == 0 and np.abs(M[n:, n:]).max() == 0
    # singular exactly at the lattice points of the Bloch wavevector
    assert dense_sigma_min(S.assemble_bloch(ZERO, kap(0, 0), 2)) < 1e-15
    assert dense_sigma_min(S.assemble_bloch(ZERO, kap(1, -1), 2)) < 1e-15
    assert S.dispersion_residual(ZERO, kap(0.3, 0.1), 4) > 1e-2


def test_constant_potential_matches_closed_form():
    # each Fourier block is [[U, s_d], [-s_dbar, Ubar]] whose determinant is |U|^2 + s_d s_dbar
    U = 0.5
    kx, ky = 0.37, -0.21
    M = S.assemble_bloch(HALF, kap(kx, ky), 2)
    blocks = []
    for m1, m2 in itertools.product(range(-2, 3), repeat=2):
        sd, sdb = plane_wave_symbol(kx + m1, ky + m2)
        blocks.append(np.linalg.svd(np.array([[U, sd], [-sdb, U]]), compute_uv=False)[-1])
        det = np.linalg.det(np.array([[U, sd], [-sdb, U]]))
        assert det == pytest.approx(constant_dispersion(U, kx + m1, ky + m2))
    assert dense_sigma_min(M) == pytest.approx(min(blocks), rel=1e-12)


@pytest.mark.parametrize("kx, ky", [(1, 0), (0.6, 0.8), (np.cos(2), np.sin(2))])
def test_residual_on_the_circle(kx, ky):
    assert S.dispersion_residual(HALF, kap(kx, ky), 8) < 1e-8


def test_residual_far_from_zero_set():
    assert S.dispersion_residual(HALF, kap(0.5, 0.0), 8) > 1e-3


def test_cutoff_limit():
    with pytest.raises(CutoffTooLarge):
        S.assemble_bloch(HALF, (0, 0), 11)
    S.assemble_bloch(HALF, (0, 0), 10)


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.integers(-2, 2), st.integers(-2, 2))
def test_dual_lattice_periodicity(kx, ky, m1, m2):
    U = PeriodicField(G32, 0.5 + 0.05 * np.cos(G32.x) + 0.03j * np.sin(G32.y))
    a = S.dispersion_residual(U, kap(kx, ky), 6)
    b = S.dispersion_residual(U, kap(kx + m1, ky + m2), 6)
    assert abs(a - b) < 1e-10


@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5))
def test_reflection_symmetry_of_real_constant(kx, ky):
    a = S.dispersion_residual(HALF, kap(kx, ky), 4)
    b = S.dispersion_residual(HALF, kap(-kx, -ky), 4)
    assert abs(a - b) < 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3))
def test_unimodular_multipliers(k1, k2):
    mu = S.multipliers_from_k(G32, (k1, k2))
    assert max(abs(abs(m) - 1) for m in mu) < 1e-14
    mu2 = S.multipliers(G32, *S.exponents_for((k1, k2)))
    np.testing.assert_allclose(mu, mu2, atol=1e-12)


def test_gauge_multipliers():
    s = S.SpectralSample(0.1, 0.0, 0.0, *S.multipliers_from_k(G32, (0.1, 0.0)))
    mu, mu_g = S.multipliers_with_gauge(s, 0.0, G32)
    assert mu_g == mu
    mu, mu_g = S.multipliers_with_gauge(s, 0.5, G32)
    assert mu_g[0] == pytest.approx(np.exp(-np.pi) * mu[0], rel=1e-15)
    assert mu_g[1] == pytest.approx(-mu[1], rel=1e-15)


def test_gauge_potential():
    Up = S.gauge_potential(HALF, 0.5)
    np.testing.assert_allclose(Up.values, 0.5 * np.exp(1j * G32.y), atol=1e-15)
    with pytest.raises(ValueError):
        S.gauge_potential(HALF, 0.1)


def test_cutoff_doubling_keeps_zeros():
    U = PeriodicField(G32, 0.5 + 0.05 * np.cos(G32.x) + 0.03j * np.sin(G32.y))
    samples = S.scan_zero_set(U, resolution=12, cutoff=5)
    assert samples
    for s in samples[:8]:
        assert S.dispersion_residual(U, (s.k1, s.k2), 10) < 1e-8


def test_scan_half_circle_coarse():
    samples = S.scan_zero_set(HALF, resolution=24)
    h = 1.0 / 23
    assert len(samples) > 50
    assert circle_distance(samples, 1.0).max() < h
    assert max(s.sigma_min for s in samples) < 1e-6


def test_scan_clifford_potential():
    samples = S.scan_zero_set(PeriodicField.constant(G32, CLIFFORD_U), resolution=24)
    assert samples
    assert circle_distance(samples, 1 / np.sqrt(2)).max() < 1.0 / 23


def test_scan_free_points():
    samples = S.scan_zero_set(ZERO, resolution=15)
    assert samples
    for s in samples:
        assert np.hypot(s.k1, s.k2) * TWO_PI < 1.0 / 14


def test_scan_empty_window_warns():
    window = ((0.45 / TWO_PI, 0.5 / TWO_PI), (0.45 / TWO_PI, 0.5 / TWO_PI))
    with pytest.warns(EmptyZeroSet):
        assert S.scan_zero_set(HALF, window, resolution=6) == []


def test_floquet_plane_wave():
    sol = S.floquet_nullspace(HALF, kap(1, 0), 8)
    # four circles meet at kappa = (1, 0)
    assert sol.degenerate
    p1, p2 = sol.spinor.p1, sol.spinor.p2
    np.testing.assert_allclose(p2.values / p1.values, 1j, atol=1e-10)
    assert sol.spinor.lam == pytest.approx(0.5j) and sol.spinor.rho == pytest.approx(0.5j)
    assert S.floquet_dirac_residual(sol, HALF) < 1e-10


def test_floquet_simple_point():
    k = kap(np.cos(2), np.sin(2))
    sol = S.floquet_nullspace(HALF, k, 8)
    assert not sol.degenerate and sol.gap_ratio > 10
    assert S.floquet_dirac_residual(sol, HALF) < 1e-8


def test_floquet_free_single_mode():
    # rho = 0.3 kills every psi1 mode, leaving psi2 = const
    sol = S.floquet_nullspace_exponents(ZERO, 0.0, 0.3, 4)
    assert sol.spinor.p1.norm_inf() < 1e-14
    np.testing.assert_allclose(sol.spinor.p2.values, sol.spinor.p2.values[0, 0], atol=1e-14)


def test_floquet_off_curve():
    with pytest.raises(NotOnCurve):
        S.floquet_nullspace(HALF, kap(0.5, 0.0), 8)


def test_scan_is_deterministic():
    a = S.scan_zero_set(HALF, resolution=10)
    b = S.scan_zero_set(HALF, resolution=10)
    assert a == b


def test_no_warning_on_hit():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        S.scan_zero_set(HALF, resolution=10)
