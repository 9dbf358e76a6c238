"""Closed-form Weierstrass data used by tests, scenarios and the CLI."""
from __future__ import annotations

import numpy as np

from .dirac import SpinorPair, WeierstrassData
from .torus_field import PeriodicField, TorusGrid, make_lattice

TWO_PI = 2 * np.pi

CLIFFORD_U = (1 + 1j) / 4
CLIFFORD_LAM = (-1 - 1j) / 4
CLIFFORD_RHO = (1 - 1j) / 4


def square_grid(N: int = 32) -> TorusGrid:
    return make_lattice(TWO_PI, TWO_PI * 1j, N, N)


def clifford_data(grid: TorusGrid | None = None, r: float = 1.0) -> WeierstrassData:
    """Product of two circles of radius r on the square lattice.

    psi1 = psi2 = i sqrt(r/2) e^{-i(x+y)/2}, phi1 = -phi2 = i sqrt(r/2) e^{i(y-x)/2},
    U = (1+i)/4.
    """
    grid = grid or square_grid()
    amp = 1j * np.sqrt(r / 2)
    x = grid.x
    one = PeriodicField.constant(grid, amp)
    psi = SpinorPair.from_periodic(CLIFFORD_LAM, CLIFFORD_RHO, one, one)
    # phi = e^{-lam z - rho zbar} * amp * e^{-ix}
    q = PeriodicField(grid, amp * np.exp(-1j * x))
    phi = SpinorPair.from_periodic(-CLIFFORD_LAM, -CLIFFORD_RHO, q, -q)
    return WeierstrassData(psi, phi, PeriodicField.constant(grid, CLIFFORD_U))


def plane_wave_data(grid: TorusGrid | None = None) -> WeierstrassData:
    """U = 1/2, psi = phi = (1, i) e^{ix}: a cylinder, not a closed torus."""
    grid = grid or square_grid()
    lam = rho = 0.5j
    x = grid.x
    psi = SpinorPair.from_periodic(lam, rho, PeriodicField.constant(grid, 1.0),
                                   PeriodicField.constant(grid, 1j))
    e2 = np.exp(2j * x)
    phi = SpinorPair.from_periodic(-lam, -rho, PeriodicField(grid, e2), PeriodicField(grid, 1j * e2))
    return WeierstrassData(psi, phi, PeriodicField.constant(grid, 0.5))


def product_torus_coordinates(grid: TorusGrid, r: float = 1.0) -> np.ndarray:
    x, y = grid.x, grid.y
    return r * np.array([np.cos(x), np.sin(x), np.cos(y), np.sin(y)])


def product_torus(grid: TorusGrid | None = None, r: float = 1.0):
    from .weierstrass import Immersion
    grid = grid or square_grid()
    return Immersion.from_coordinates(grid, product_torus_coordinates(grid, r), x0=np.zeros(4))


def perturbed_clifford(grid: TorusGrid | None = None, eps: float = 0.1, cutoff: int = 10):
    """Generic Weierstrass data near the Clifford torus.

    psi and U come from the lift of the Gauss-map component with
    theta = pi - x - y + eps p1, eta = pi/4 + eps p2; phi is the near-null
    Bloch vector of D^vee at the opposite exponents.  The periods do not
    vanish, so this is a surface with nontrivial translational periods.
    """
    from .dirac import GaussMapComponent, lift_to_dirac
    from .spectral_curve import floquet_nullspace_exponents
    grid = grid or square_grid()
    x, y = grid.x, grid.y
    theta = PeriodicField(grid, np.pi + eps * (np.cos(x) + 0.5 * np.sin(2 * y)))
    eta = PeriodicField(grid, np.pi / 4 + eps * (np.sin(x + y) + 0.3 * np.cos(2 * x - y)))
    psi, U = lift_to_dirac(GaussMapComponent(theta, eta, (-1, -1)))
    sol = floquet_nullspace_exponents(U, -psi.lam, -psi.rho, cutoff, vee=True)
    return WeierstrassData(psi, sol.spinor, U)
