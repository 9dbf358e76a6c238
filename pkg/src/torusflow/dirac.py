"""Dirac operators with potential, Gauss-map lifts and gauge transformations.

    D  = [[U, d], [-dbar, conj(U)]]
    Dv = [[conj(U), d], [-dbar, U]]

Spinors are quasi-periodic: both components share the prefactor exponents
(lam, rho), and phi carries the opposite exponents of psi.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (GaussMapSingular, GridMismatch, InadmissibleGauge, NotConformal,
                     WindingObstruction)
from .torus_field import (PeriodicField, QuasiPeriodicField, TorusGrid, derivative,
                          inverse_derivative_zero_mean)

GAUGE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class SpinorPair:
    psi1: QuasiPeriodicField
    psi2: QuasiPeriodicField

    def __post_init__(self):
        a, b = self.psi1, self.psi2
        a.grid.check(b.grid)
        if (a.lam, a.rho) != (b.lam, b.rho):
            raise ValueError("spinor components must share prefactor exponents")

    @classmethod
    def from_periodic(cls, lam: complex, rho: complex, p1, p2) -> "SpinorPair":
        lam, rho = complex(lam), complex(rho)
        return cls(QuasiPeriodicField(lam, rho, p1), QuasiPeriodicField(lam, rho, p2))

    @property
    def grid(self) -> TorusGrid:
        return self.psi1.grid

    @property
    def lam(self) -> complex:
        return self.psi1.lam

    @property
    def rho(self) -> complex:
        return self.psi1.rho

    @property
    def p1(self) -> PeriodicField:
        return self.psi1.periodic

    @property
    def p2(self) -> PeriodicField:
        return self.psi2.periodic

    def scale(self, c) -> "SpinorPair":
        return SpinorPair.from_periodic(self.lam, self.rho, self.p1 * c, self.p2 * c)

    def norm_inf(self) -> float:
        return max(self.p1.norm_inf(), self.p2.norm_inf())


@dataclass(frozen=True, eq=False)
class WeierstrassData:
    psi: SpinorPair
    phi: SpinorPair
    U: PeriodicField

    def __post_init__(self):
        self.psi.grid.check(self.phi.grid)
        self.psi.grid.check(self.U.grid)
        if not (np.isclose(self.phi.lam, -self.psi.lam, atol=1e-12)
                and np.isclose(self.phi.rho, -self.psi.rho, atol=1e-12)):
            raise ValueError("phi must carry the exponents opposite to psi")

    @property
    def grid(self) -> TorusGrid:
        return self.U.grid

    def torus_compatible(self, tol: float = GAUGE_TOL) -> bool:
        d = self.psi.lam - np.conj(self.psi.rho)
        return all(_is_pi_integer((d * g).imag, tol) for g in (self.grid.gamma1, self.grid.gamma2))


@dataclass(frozen=True, eq=False)
class GaussMapComponent:
    """(e^{i theta} cos eta : sin eta) with theta = 2 pi (w1 u1 + w2 u2) + theta_periodic."""

    theta_periodic: PeriodicField
    eta: PeriodicField
    winding: tuple[int, int] = (0, 0)

    @property
    def grid(self) -> TorusGrid:
        return self.eta.grid

    def theta_linear_wavevector(self) -> np.ndarray:
        w1, w2 = self.winding
        return 2 * np.pi * (w1 * self.grid.dual1 + w2 * self.grid.dual2)

    def theta(self) -> np.ndarray:
        k = self.theta_linear_wavevector()
        g = self.grid
        return k[0] * g.x + k[1] * g.y + self.theta_periodic.real


def _is_pi_integer(value: float, tol: float) -> bool:
    r = value / np.pi
    return abs(r - round(r)) <= tol


# ---------------------------------------------------------------------------
# operators


def _dirac(psi: SpinorPair, U: PeriodicField, Ubar: PeriodicField) -> SpinorPair:
    if not psi.grid.compatible(U.grid):
        raise GridMismatch("spinor and potential live on different grids")
    d2 = derivative(psi.psi2, "d").periodic
    db1 = derivative(psi.psi1, "dbar").periodic
    r1 = d2 + U * psi.p1
    r2 = -db1 + Ubar * psi.p2
    return SpinorPair.from_periodic(psi.lam, psi.rho, r1, r2)


def apply_dirac(psi: SpinorPair, U: PeriodicField) -> SpinorPair:
    """Residual (d psi2 + U psi1, -dbar psi1 + conj(U) psi2)."""
    return _dirac(psi, U, U.conj())


def apply_dirac_vee(phi: SpinorPair, U: PeriodicField) -> SpinorPair:
    """Residual (d phi2 + conj(U) phi1, -dbar phi1 + U phi2)."""
    return _dirac(phi, U.conj(), U)


def dirac_residual(psi: SpinorPair, U: PeriodicField, vee: bool = False) -> float:
    """Sup-norm of the Dirac residual relative to the size of its terms."""
    res = (apply_dirac_vee if vee else apply_dirac)(psi, U)
    Ua = U if not vee else U.conj()
    scale = max(
        derivative(psi.psi2, "d").periodic.norm_inf(),
        (Ua * psi.p1).norm_inf(),
        derivative(psi.psi1, "dbar").periodic.norm_inf(),
        (Ua.conj() * psi.p2).norm_inf(),
    )
    if scale == 0.0:
        return 0.0
    return res.norm_inf() / scale


# ---------------------------------------------------------------------------
# Gauss map


def segre_products(f1, f2, f3, f4):
    """Invert the form formulas for the spinor products.

    Returns (A, B, C, D) = (conj(phi2 psi2), phi1 psi1, conj(phi2) psi1, phi1 conj(psi2)).
    """
    A = -1j * f1 + f2
    B = -1j * f1 - f2
    C = f3 - 1j * f4
    D = f3 + 1j * f4
    return A, B, C, D


def _projective_angles(p: np.ndarray, q: np.ndarray):
    """(p : q) = (e^{i theta} cos eta : sin eta) -> (e^{i theta}, eta)."""
    ap, aq = np.abs(p), np.abs(q)
    eta = np.arctan2(aq, ap)
    phase = np.ones_like(p)
    both = (ap > 0) & (aq > 0)
    phase[both] = (p[both] * np.conj(q[both])) / (ap[both] * aq[both])
    only_p = (ap > 0) & ~both
    phase[only_p] = p[only_p] / ap[only_p]
    only_q = (aq > 0) & ~both
    phase[only_q] = np.conj(q[only_q]) / aq[only_q]
    return phase, eta


def _pick_pair(p1, q1, p2, q2):
    n1 = np.abs(p1) ** 2 + np.abs(q1) ** 2
    n2 = np.abs(p2) ** 2 + np.abs(q2) ** 2
    if np.any(np.maximum(n1, n2) == 0.0):
        raise GaussMapSingular("all spinor products vanish at a node")
    use1 = n1 >= n2
    return np.where(use1, p1, p2), np.where(use1, q1, q2)


def _component_from_phase(grid: TorusGrid, phase: np.ndarray, eta: np.ndarray) -> GaussMapComponent:
    # winding numbers of e^{i theta} along the two generators
    w1 = np.angle(np.roll(phase[:, 0], -1) / phase[:, 0]).sum() / (2 * np.pi)
    w2 = np.angle(np.roll(phase[0, :], -1) / phase[0, :]).sum() / (2 * np.pi)
    w = (int(round(w1)), int(round(w2)))
    j1 = np.arange(grid.n1)[:, None] / grid.n1
    j2 = np.arange(grid.n2)[None, :] / grid.n2
    rem = phase * np.exp(-2j * np.pi * (w[0] * j1 + w[1] * j2))
    a = np.angle(rem)
    a[:, 0] = np.unwrap(a[:, 0])
    a = np.unwrap(a, axis=1)
    return GaussMapComponent(PeriodicField(grid, a), PeriodicField(grid, eta), w)


def decompose_gauss_map(x, tol: float = 1e-8):
    """Split the Gauss map of an immersion into its two CP^1 components.

    Returns ``(G_psi, G_phi, conformal_defect)`` where the defect is
    max |sum_k (x^k_z)^2|.
    """
    f = [fk.values for fk in x.forms()]
    defect = float(np.abs(sum(fk * fk for fk in f)).max())
    scale = float(sum(np.abs(fk) ** 2 for fk in f).max())
    if defect > tol * max(scale, 1e-300):
        raise NotConformal(f"conformal defect {defect:.3e} exceeds tolerance")
    A, B, C, D = segre_products(*f)
    # G_psi = (psi1 : conj psi2) = (B : D) = (C : A)
    p, q = _pick_pair(B, D, C, A)
    g_psi = _component_from_phase(x.grid, *_projective_angles(p, q))
    # G_phi = (phi1 : conj phi2) = (B : C) = (D : A)
    p, q = _pick_pair(B, C, D, A)
    g_phi = _component_from_phase(x.grid, *_projective_angles(p, q))
    return g_psi, g_phi, defect


def admissible_gauge_basis(grid: TorusGrid) -> tuple[complex, complex]:
    """Basis of {W : Im(W gamma) in pi Z for every lattice vector gamma}."""
    g1, g2 = grid.gamma1, grid.gamma2
    M = np.array([[g1.imag, g1.real], [g2.imag, g2.real]])
    sol = np.linalg.solve(M, np.pi * np.eye(2))
    return complex(sol[0, 0], sol[1, 0]), complex(sol[0, 1], sol[1, 1])


def is_admissible(grid: TorusGrid, b: complex, tol: float = GAUGE_TOL) -> bool:
    return all(_is_pi_integer((b * g).imag, tol) for g in (grid.gamma1, grid.gamma2))


def lift_to_dirac(G: GaussMapComponent, b_choice=(0, 0)):
    """Lift a Gauss-map component to a Dirac spinor with periodic potential.

    Solves dbar g = -i theta_zbar cos^2 eta with g = b z + c zbar + f, f
    periodic with zero mean and c the mean of the right-hand side. The remaining
    freedom in b is the admissible lattice, indexed by ``b_choice``; index
    (0, 0) is the representative whose potential has no extra linear phase.

    Returns ``(psi, U)``.
    """
    w = G.winding
    if any(int(round(wi)) != wi for wi in w):
        raise WindingObstruction(f"e^(i theta) is not single valued (winding {w})")
    grid = G.grid
    k = G.theta_linear_wavevector()
    tau = 0.5 * (k[0] - 1j * k[1])  # d/dz of the linear part of theta
    th = PeriodicField(grid, G.theta_periodic.real)
    eta = PeriodicField(grid, G.eta.real)
    th_z = derivative(th, "d").values + tau
    th_zb = derivative(th, "dbar").values + np.conj(tau)
    eta_z = derivative(eta, "d").values
    ce, se = np.cos(eta.real), np.sin(eta.real)

    F = PeriodicField(grid, -1j * th_zb * ce ** 2)
    c = F.mean()
    f = inverse_derivative_zero_mean(F, "dbar").values

    w1, w2 = admissible_gauge_basis(grid)
    W = b_choice[0] * w1 + b_choice[1] * w2
    b = np.conj(c) - 1j * tau - W
    lam, rho = np.conj(c), np.conj(b)

    z = grid.z
    phase_W = np.exp(W * z - np.conj(W) * np.conj(z))  # periodic, unimodular
    U = -phase_W * np.exp(np.conj(f) - f - 1j * th.real) * (1j * th_z * se * ce + eta_z)
    p1 = np.conj(phase_W) * np.exp(f + 1j * th.real) * ce
    p2 = np.exp(np.conj(f)) * se
    psi = SpinorPair.from_periodic(lam, rho, PeriodicField(grid, p1), PeriodicField(grid, p2))
    return psi, PeriodicField(grid, U)


def gauge_transform(data: WeierstrassData, a: complex, b: complex) -> WeierstrassData:
    """Apply h = a + b z: psi -> (e^h psi1, e^hbar psi2), phi -> (e^-h phi1, e^-hbar phi2)."""
    grid = data.grid
    if not is_admissible(grid, b):
        raise InadmissibleGauge(f"Im(b gamma)/pi not integral for b = {b}")
    a, b = complex(a), complex(b)
    z = grid.z
    lam, rho = data.psi.lam + b, data.psi.rho
    # e^{bbar zbar - b z}: periodic because b is admissible
    wave = np.exp(np.conj(b) * np.conj(z) - b * z)
    psi = SpinorPair.from_periodic(
        lam, rho,
        data.psi.p1 * np.exp(a),
        data.psi.p2 * (np.exp(np.conj(a)) * wave),
    )
    phi = SpinorPair.from_periodic(
        -lam, -rho,
        data.phi.p1 * np.exp(-a),
        data.phi.p2 * (np.exp(-np.conj(a)) * np.conj(wave)),
    )
    U = data.U * (np.exp(np.conj(a) - a) * wave)
    return WeierstrassData(psi, phi, U)
