"""Closed 1-forms from spinors, torus closure, surface integration and curvature."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dirac import (SpinorPair, WeierstrassData, decompose_gauss_map, lift_to_dirac,
                    segre_products)
from .errors import DegenerateMetric, NonPeriodicProduct, NotClosed
from .torus_field import (PeriodicField, TorusGrid, as_periodic, derivative,
                          inverse_derivative_zero_mean, product)

CLOSEDNESS_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class Immersion:
    """x^k = x0_k + 2 Re(c_k z) + periodic_k for k = 1..4."""

    grid: TorusGrid
    linear: np.ndarray          # (4,) complex
    periodic: tuple             # 4 real PeriodicFields, zero mean
    x0: np.ndarray              # (4,) real

    @classmethod
    def from_coordinates(cls, grid: TorusGrid, coords, linear=None, x0=None) -> "Immersion":
        """Wrap sampled coordinates; ``linear`` gives the non-periodic parts c_k."""
        coords = np.asarray(coords, dtype=float)
        lin = np.zeros(4, complex) if linear is None else np.asarray(linear, complex)
        z = grid.z
        per = []
        base = np.zeros(4)
        for k in range(4):
            r = coords[k] - 2 * (lin[k] * z).real
            base[k] = r.mean()
            per.append(PeriodicField(grid, r - r.mean()))
        if x0 is not None:
            base = np.asarray(x0, float)
        return cls(grid, lin, tuple(per), base)

    def coordinates(self) -> np.ndarray:
        z = self.grid.z
        return np.array([self.x0[k] + 2 * (self.linear[k] * z).real + self.periodic[k].real
                         for k in range(4)])

    def forms(self) -> list[PeriodicField]:
        """f_k = dx^k/dz."""
        return [derivative(self.periodic[k], "d") + self.linear[k] for k in range(4)]

    def period_vectors(self) -> np.ndarray:
        """(4, 2) array of V^k(gamma_j) = 2 Re(c_k gamma_j)."""
        g = np.array([self.grid.gamma1, self.grid.gamma2])
        return 2 * (self.linear[:, None] * g[None, :]).real


@dataclass(frozen=True)
class ClosureReport:
    periods: np.ndarray       # (4, 2) real
    J: np.ndarray             # (4,) complex
    closedness: float

    def max_abs(self) -> float:
        return float(max(np.abs(self.periods).max(), np.abs(self.J).max()))


def _bilinear_products(data: WeierstrassData):
    """The four periodic products entering the forms: A, B, C, D."""
    psi, phi = data.psi, data.phi
    try:
        A = as_periodic(product(phi.psi2, psi.psi2, dealias=False)).conj()
        B = as_periodic(product(phi.psi1, psi.psi1, dealias=False))
        C = as_periodic(product(phi.psi2.conj(), psi.psi1, dealias=False))
        D = as_periodic(product(phi.psi1, psi.psi2.conj(), dealias=False))
    except NonPeriodicProduct as exc:
        raise NonPeriodicProduct(f"Weierstrass integrands are not periodic: {exc}") from None
    return A, B, C, D


def forms_from_spinors(data: WeierstrassData) -> list[PeriodicField]:
    A, B, C, D = _bilinear_products(data)
    f1 = (A + B) * 0.5j
    f2 = (A - B) * 0.5
    f3 = (C + D) * 0.5
    f4 = (C - D) * 0.5j
    return [f1, f2, f3, f4]


def closedness_residual(forms, eps: float = 1e-300) -> float:
    """max |Im dbar f_k| relative to max |dbar f_k|; zero iff every form is closed."""
    dbar = [derivative(f, "dbar").values for f in forms]
    num = max(float(np.abs(d.imag).max()) for d in dbar)
    den = max(float(np.abs(d).max()) for d in dbar)
    return num / (den + eps)


def closure_report(data: WeierstrassData) -> ClosureReport:
    forms = forms_from_spinors(data)
    grid = data.grid
    g = np.array([grid.gamma1, grid.gamma2])
    means = np.array([f.mean() for f in forms])
    periods = 2 * (means[:, None] * g[None, :]).real
    psi, phi = data.psi, data.phi
    prods = [
        product(psi.psi1.conj(), phi.psi1.conj(), dealias=False),
        product(psi.psi1.conj(), phi.psi2, dealias=False),
        product(psi.psi2, phi.psi1.conj(), dealias=False),
        product(psi.psi2, phi.psi2, dealias=False),
    ]
    J = np.array([as_periodic(p).mean() for p in prods])
    return ClosureReport(periods, J, closedness_residual(forms))


def integrate_surface(forms, x0=(0.0, 0.0, 0.0, 0.0), tol: float = CLOSEDNESS_TOL) -> Immersion:
    """Integrate dx^k = f_k dz + conj(f_k) dzbar; the periodic parts have zero mean."""
    res = closedness_residual(forms)
    if res > tol:
        raise NotClosed(f"closedness residual {res:.3e} exceeds {tol:.1e}")
    grid = forms[0].grid
    lin = np.array([f.mean() for f in forms])
    per = tuple(PeriodicField(grid, inverse_derivative_zero_mean(f, "d").real) for f in forms)
    return Immersion(grid, lin, per, np.asarray(x0, float))


def metric_and_curvature(data: WeierstrassData, x: Immersion):
    """Return (e^{2 alpha}, |H|, max | |U| - |H| e^alpha / 2 |)."""
    psi, phi = data.psi, data.phi
    # the prefactors of psi and phi cancel in the product of the norms
    e2a = ((np.abs(psi.p1.values) ** 2 + np.abs(psi.p2.values) ** 2)
           * (np.abs(phi.p1.values) ** 2 + np.abs(phi.p2.values) ** 2))
    if e2a.min() < 1e-14:
        raise DegenerateMetric(f"metric factor {e2a.min():.3e} vanishes at a node")
    xzz = np.array([derivative(derivative(p, "d"), "dbar").values for p in x.periodic])
    Hnorm = 2 * np.sqrt((np.abs(xzz) ** 2).sum(axis=0)) / e2a
    defect = float(np.abs(np.abs(data.U.values) - Hnorm * np.sqrt(e2a) / 2).max())
    return PeriodicField(x.grid, e2a), PeriodicField(x.grid, Hnorm), defect


def willmore(U: PeriodicField) -> float:
    """4 * integral of |U|^2 over the fundamental domain."""
    return float(4 * U.grid.area * np.mean(np.abs(U.values) ** 2))


def willmore_from_immersion(x: Immersion) -> float:
    """Integral of |H|^2 dmu computed from the coordinates alone."""
    f = [fk.values for fk in x.forms()]
    e2a = 2 * sum(np.abs(fk) ** 2 for fk in f)
    xzz = np.array([derivative(derivative(p, "d"), "dbar").values for p in x.periodic])
    density = 4 * (np.abs(xzz) ** 2).sum(axis=0) / e2a
    return float(x.grid.area * density.mean())


def weierstrass_data_from_immersion(x: Immersion, b_choice=(0, 0), tol: float = 1e-8) -> WeierstrassData:
    """Recover (psi, phi, U) for a conformal immersion.

    psi and U come from the lift of the first Gauss-map component; phi is then
    fixed pointwise by the products A..D.
    """
    g_psi, _, _ = decompose_gauss_map(x, tol)
    psi, U = lift_to_dirac(g_psi, b_choice)
    grid = x.grid
    A, B, C, D = segre_products(*[f.values for f in x.forms()])
    P1, P2 = psi.p1.values, psi.p2.values
    lam, rho = psi.lam, psi.rho
    ratio_exp = (lam - np.conj(rho), rho - np.conj(lam))
    if not grid.is_periodic_exponent(*ratio_exp):
        raise NonPeriodicProduct("lifted spinor is not torus compatible")
    E_over_Ebar = grid.exp_linear(*ratio_exp)
    use1 = np.abs(P1) >= np.abs(P2)
    with np.errstate(divide="ignore", invalid="ignore"):
        Q1 = np.where(use1, B / P1, D * E_over_Ebar / np.conj(P2))
        Q2 = np.where(use1, np.conj(C) * E_over_Ebar / np.conj(P1), np.conj(A) / P2)
    phi = SpinorPair.from_periodic(-lam, -rho, PeriodicField(grid, Q1), PeriodicField(grid, Q2))
    return WeierstrassData(psi, phi, U)
