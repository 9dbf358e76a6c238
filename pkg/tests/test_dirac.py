import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusflow.dirac import (GaussMapComponent, SpinorPair, WeierstrassData, admissible_gauge_basis,
                             apply_dirac, apply_dirac_vee, decompose_gauss_map, dirac_residual,
                             gauge_transform, is_admissible, lift_to_dirac)
from torusflow.errors import InadmissibleGauge, NotConformal, WindingObstruction
from torusflow.fixtures import clifford_data, plane_wave_data, product_torus, square_grid
from torusflow.torus_field import PeriodicField
from torusflow.weierstrass import Immersion, closure_report, forms_from_spinors, willmore

TWO_PI = 2 * np.pi


def _substituted_clifford_residual(grid):
    # closed-form derivatives of the fixture, independent of the FFT path
    x, y = grid.x, grid.y
    a = 1j * np.sqrt(0.5)
    psi = a * np.exp(-0.5j * (x + y))
    dpsi = 0.5 * (-0.5j - 1j * -0.5j) * psi        # (d_x - i d_y)/2
    dbpsi = 0.5 * (-0.5j + 1j * -0.5j) * psi
    U = (1 + 1j) / 4
    return np.abs(dpsi + U * psi).max(), np.abs(-dbpsi + np.conj(U) * psi).max()


def test_clifford_dirac_residual(square):
    data = clifford_data(square)
    assert max(_substituted_clifford_residual(square)) < 1e-15
    assert apply_dirac(data.psi, data.U).norm_inf() < 1e-14
    assert apply_dirac_vee(data.phi, data.U).norm_inf() < 1e-14
    assert dirac_residual(data.psi, data.U) < 1e-14
    assert dirac_residual(data.phi, data.U, vee=True) < 1e-14


def test_plane_wave_residuals(square):
    data = plane_wave_data(square)
    assert apply_dirac(data.psi, data.U).norm_inf() < 1e-14
    assert apply_dirac_vee(data.phi, data.U).norm_inf() < 1e-14
    # U real: D and D^vee coincide
    assert apply_dirac_vee(data.psi, data.U).norm_inf() < 1e-14


def test_free_holomorphic_spinors(square):
    zero = PeriodicField.constant(square, 0.0)
    one = PeriodicField.constant(square, 1.0)
    b = 0.5j
    psi = SpinorPair.from_periodic(b, 0.0, one, zero)
    assert apply_dirac(psi, zero).norm_inf() == 0.0
    phi = SpinorPair.from_periodic(0.0, b, zero, one)
    assert apply_dirac_vee(phi, zero).norm_inf() == 0.0


def test_wrong_potential_is_detected(square):
    data = clifford_data(square)
    assert dirac_residual(data.psi, data.U * 1.1) > 1e-2


def test_product_torus_gauss_map():
    x = product_torus(square_grid(32))
    g_psi, g_phi, defect = decompose_gauss_map(x)
    assert defect < 1e-12
    th = g_psi.theta()
    X, Y = x.grid.x, x.grid.y
    ratio = np.exp(1j * th) / np.tan(g_psi.eta.real)
    np.testing.assert_allclose(ratio, -np.exp(-1j * (X + Y)), atol=1e-12)
    assert g_psi.winding == (-1, -1)


def test_gauss_map_translation_invariance():
    grid = square_grid(32)
    x0 = product_torus(grid)
    shifted = Immersion.from_coordinates(grid, np.roll(x0.coordinates(), (-3, 5), axis=(1, 2)))
    a, _, _ = decompose_gauss_map(x0)
    b, _, _ = decompose_gauss_map(shifted)
    np.testing.assert_allclose(np.roll(a.eta.real, (-3, 5), axis=(0, 1)), b.eta.real, atol=1e-12)
    ea = np.roll(np.exp(1j * a.theta()), (-3, 5), axis=(0, 1))
    np.testing.assert_allclose(ea, np.exp(1j * b.theta()), atol=1e-12)


def test_not_conformal(square):
    x = Immersion.from_coordinates(square, [2 * square.x, square.y, 0 * square.x, 0 * square.x],
                                   linear=[1.0, -0.5j, 0, 0])
    with pytest.raises(NotConformal):
        decompose_gauss_map(x)


def test_lift_of_clifford_gauss_data(square):
    G = GaussMapComponent(PeriodicField.constant(square, np.pi), PeriodicField.constant(square, np.pi / 4),
                          (-1, -1))
    psi, U = lift_to_dirac(G)
    np.testing.assert_allclose(np.abs(U.values), 1 / (2 * np.sqrt(2)), atol=1e-14)
    assert dirac_residual(psi, U) < 1e-13
    assert willmore(U) == pytest.approx(2 * np.pi ** 2, rel=1e-14)


def test_lift_of_constant_gauss_map(square):
    G = GaussMapComponent(PeriodicField.constant(square, 0.0), PeriodicField.constant(square, np.pi / 4))
    psi, U = lift_to_dirac(G)
    assert U.norm_inf() == 0.0
    assert psi.lam == 0 and psi.rho == 0


def test_lift_rejects_fractional_winding(square):
    G = GaussMapComponent(PeriodicField.constant(square, 0.0), PeriodicField.constant(square, np.pi / 4),
                          (0.5, 0))
    with pytest.raises(WindingObstruction):
        lift_to_dirac(G)


@given(st.integers(0, 2 ** 31 - 1), st.integers(-1, 1), st.integers(-1, 1))
def test_lift_solves_dirac_and_reproduces_gauss_map(seed, w1, w2):
    grid = square_grid(32)
    rng = np.random.default_rng(seed)
    c = rng.normal(size=4) * 0.2
    th = PeriodicField(grid, c[0] * np.cos(grid.x) + c[1] * np.sin(grid.x + grid.y))
    eta = PeriodicField(grid, np.pi / 4 + c[2] * np.sin(grid.y) + c[3] * np.cos(grid.x - grid.y))
    G = GaussMapComponent(th, eta, (w1, w2))
    psi, U = lift_to_dirac(G)
    assert dirac_residual(psi, U) < 1e-8
    ratio = psi.psi1.values() / np.conj(psi.psi2.values())
    expect = np.exp(1j * G.theta()) / np.tan(eta.real)
    np.testing.assert_allclose(ratio, expect, rtol=1e-10)


def test_admissible_gauges(square):
    assert is_admissible(square, 1j)
    assert is_admissible(square, 0.5)
    assert not is_admissible(square, (1 + 1j) / 3)
    w1, w2 = admissible_gauge_basis(square)
    for w in (w1, w2, w1 - 3 * w2):
        assert is_admissible(square, w)
    with pytest.raises(InadmissibleGauge):
        gauge_transform(clifford_data(square), 0.0, (1 + 1j) / 3)


def test_gauge_constant_a(square):
    data = clifford_data(square)
    a = 0.3 - 0.7j
    out = gauge_transform(data, a, 0)
    np.testing.assert_allclose(out.U.values, data.U.values * np.exp(np.conj(a) - a), atol=1e-15)
    np.testing.assert_allclose(np.abs(out.U.values), np.abs(data.U.values), atol=1e-15)


def test_gauge_b_is_unimodular(square):
    data = clifford_data(square)
    out = gauge_transform(data, 0, 1j)
    z = square.z
    np.testing.assert_allclose(out.U.values, data.U.values * np.exp(np.conj(1j) * np.conj(z) - 1j * z),
                               atol=1e-14)
    assert dirac_residual(out.psi, out.U) < 1e-12
    assert dirac_residual(out.phi, out.U, vee=True) < 1e-12


@given(st.complex_numbers(max_magnitude=1.0), st.integers(-2, 2), st.integers(-2, 2))
def test_gauge_leaves_forms_invariant(a, n1, n2):
    grid = square_grid(16)
    data = clifford_data(grid)
    w1, w2 = admissible_gauge_basis(grid)
    out = gauge_transform(data, a, n1 * w1 + n2 * w2)
    for f, g in zip(forms_from_spinors(data), forms_from_spinors(out)):
        np.testing.assert_allclose(f.values, g.values, atol=1e-12)
    assert abs(willmore(out.U) - willmore(data.U)) < 1e-12
    assert closure_report(out).max_abs() < 1e-12


def test_torus_compatibility(square):
    assert clifford_data(square).torus_compatible()
    assert plane_wave_data(square).torus_compatible()
    assert isinstance(plane_wave_data(square), WeierstrassData)
