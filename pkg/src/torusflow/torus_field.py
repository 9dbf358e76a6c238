"""Spectral calculus on a flat torus C/Lambda.

Conventions: z = x + iy, d = (d/dx - i d/dy)/2, dbar = (d/dx + i d/dy)/2.
A plane wave e_m(z) = exp(2 pi i (m1 u1 + m2 u2)), with lattice coordinates
u_j = <dual_j, (x, y)>, has Cartesian wavevector
kappa_m = 2 pi (m1 dual1 + m2 dual2), so that d e_m = (i/2)(kx - i ky) e_m.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .errors import DegenerateLattice, GridMismatch, NonPeriodicProduct

PERIODICITY_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TorusGrid:
    gamma1: complex
    gamma2: complex
    n1: int
    n2: int
    dual1: np.ndarray = field(repr=False)
    dual2: np.ndarray = field(repr=False)
    area: float
    swapped: bool = False

    # --- geometry ---------------------------------------------------------
    @cached_property
    def z(self) -> np.ndarray:
        j1 = np.arange(self.n1)[:, None] / self.n1
        j2 = np.arange(self.n2)[None, :] / self.n2
        return j1 * self.gamma1 + j2 * self.gamma2

    @property
    def x(self) -> np.ndarray:
        return self.z.real

    @property
    def y(self) -> np.ndarray:
        return self.z.imag

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n1, self.n2)

    # --- spectral data ----------------------------------------------------
    @cached_property
    def modes(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer mode numbers (m1, m2) broadcastable to the grid shape."""
        m1 = np.rint(np.fft.fftfreq(self.n1) * self.n1).astype(int)[:, None]
        m2 = np.rint(np.fft.fftfreq(self.n2) * self.n2).astype(int)[None, :]
        return m1, m2

    @cached_property
    def kappa(self) -> tuple[np.ndarray, np.ndarray]:
        m1, m2 = self.modes
        kx = 2 * np.pi * (m1 * self.dual1[0] + m2 * self.dual2[0])
        ky = 2 * np.pi * (m1 * self.dual1[1] + m2 * self.dual2[1])
        return kx, ky

    @cached_property
    def sym_d(self) -> np.ndarray:
        kx, ky = self.kappa
        return 0.5j * (kx - 1j * ky)

    @cached_property
    def sym_dbar(self) -> np.ndarray:
        kx, ky = self.kappa
        return 0.5j * (kx + 1j * ky)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        # keep |m| < N/3 in each direction
        m1, m2 = self.modes
        k1 = math.ceil(self.n1 / 3) - 1
        k2 = math.ceil(self.n2 / 3) - 1
        return (np.abs(m1) <= k1) & (np.abs(m2) <= k2)

    def mode_wavevector(self, m1: int, m2: int) -> np.ndarray:
        return 2 * np.pi * (m1 * self.dual1 + m2 * self.dual2)

    def compatible(self, other: "TorusGrid") -> bool:
        return self is other or (
            self.n1 == other.n1
            and self.n2 == other.n2
            and self.gamma1 == other.gamma1
            and self.gamma2 == other.gamma2
        )

    def check(self, other: "TorusGrid") -> None:
        if not self.compatible(other):
            raise GridMismatch(f"incompatible grids {self} and {other}")

    def exp_linear(self, lam: complex, rho: complex) -> np.ndarray:
        """exp(lam z + rho zbar) evaluated on the nodes."""
        z = self.z
        return np.exp(lam * z + rho * np.conj(z))

    def is_periodic_exponent(self, lam: complex, rho: complex, tol: float = PERIODICITY_TOL) -> bool:
        return all(
            abs(np.exp(lam * g + rho * np.conj(g)) - 1.0) <= tol
            for g in (self.gamma1, self.gamma2)
        )


def make_lattice(gamma1: complex, gamma2: complex, N1: int = 32, N2: int = 32) -> TorusGrid:
    """Build an oriented grid on C/Lambda with Lambda spanned by ``gamma1, gamma2``."""
    gamma1, gamma2 = complex(gamma1), complex(gamma2)
    for n in (N1, N2):
        if int(n) != n or n < 8 or n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {n}")
    area = (np.conj(gamma1) * gamma2).imag
    scale = abs(gamma1) * abs(gamma2)
    if scale == 0 or abs(area) <= 1e-12 * scale:
        raise DegenerateLattice(f"generators {gamma1}, {gamma2} are real-collinear")
    swapped = False
    if area < 0:
        gamma1, gamma2 = gamma2, gamma1
        area = -area
        swapped = True
    G = np.array([[gamma1.real, gamma1.imag], [gamma2.real, gamma2.imag]])
    D = np.linalg.inv(G.T)
    return TorusGrid(gamma1, gamma2, int(N1), int(N2), D[0].copy(), D[1].copy(), float(area), swapped)


# ---------------------------------------------------------------------------
# fields


@dataclass(frozen=True, eq=False)
class PeriodicField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.shape != self.grid.shape:
            raise GridMismatch(f"values of shape {v.shape} on grid {self.grid.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TorusGrid, func) -> "PeriodicField":
        return cls(grid, func(grid.x, grid.y))

    @classmethod
    def constant(cls, grid: TorusGrid, c: complex) -> "PeriodicField":
        return cls(grid, np.full(grid.shape, complex(c)))

    @classmethod
    def from_hat(cls, grid: TorusGrid, hat: np.ndarray) -> "PeriodicField":
        return cls(grid, np.fft.ifft2(hat) * (grid.n1 * grid.n2))

    @classmethod
    def from_modes(cls, grid: TorusGrid, modes: dict) -> "PeriodicField":
        """Field sum_m a_m e_m from a ``{(m1, m2): amplitude}`` mapping."""
        hat = np.zeros(grid.shape, dtype=complex)
        for (m1, m2), amp in modes.items():
            hat[m1 % grid.n1, m2 % grid.n2] += amp
        return cls.from_hat(grid, hat)

    @property
    def hat(self) -> np.ndarray:
        """Fourier coefficients normalised so that values = sum hat[m] e_m."""
        return np.fft.fft2(self.values) / (self.grid.n1 * self.grid.n2)

    def mean(self) -> complex:
        return complex(self.values.mean())

    def conj(self) -> "PeriodicField":
        return PeriodicField(self.grid, np.conj(self.values))

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    @property
    def imag(self) -> np.ndarray:
        return self.values.imag

    def norm_inf(self) -> float:
        return float(np.abs(self.values).max())

    def _coerce(self, other):
        if isinstance(other, PeriodicField):
            self.grid.check(other.grid)
            return other.values
        if isinstance(other, QuasiPeriodicField):
            return NotImplemented
        return other

    def __add__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else PeriodicField(self.grid, self.values + o)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else PeriodicField(self.grid, self.values - o)

    def __rsub__(self, other):
        return PeriodicField(self.grid, other - self.values)

    def __mul__(self, other):
        # plain nodal product; use product() for the dealiased version
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else PeriodicField(self.grid, self.values * o)

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        return NotImplemented if o is NotImplemented else PeriodicField(self.grid, self.values / o)

    def __neg__(self):
        return PeriodicField(self.grid, -self.values)


@dataclass(frozen=True, eq=False)
class QuasiPeriodicField:
    """exp(lam z + rho zbar) times a periodic part."""

    lam: complex
    rho: complex
    periodic: PeriodicField

    @property
    def grid(self) -> TorusGrid:
        return self.periodic.grid

    @classmethod
    def wrap(cls, f, lam: complex = 0.0, rho: complex = 0.0) -> "QuasiPeriodicField":
        if isinstance(f, QuasiPeriodicField):
            return f
        return cls(complex(lam), complex(rho), f)

    def values(self) -> np.ndarray:
        return self.grid.exp_linear(self.lam, self.rho) * self.periodic.values

    def conj(self) -> "QuasiPeriodicField":
        return QuasiPeriodicField(np.conj(self.rho), np.conj(self.lam), self.periodic.conj())

    def scale(self, c) -> "QuasiPeriodicField":
        return QuasiPeriodicField(self.lam, self.rho, self.periodic * c)

    def rebase(self, lam: complex, rho: complex) -> "QuasiPeriodicField":
        """Re-express with prefactor exponents (lam, rho); the quotient must be periodic."""
        dl, dr = self.lam - lam, self.rho - rho
        if not self.grid.is_periodic_exponent(dl, dr):
            raise NonPeriodicProduct(f"exponent shift {(dl, dr)} is not a lattice mode")
        return QuasiPeriodicField(complex(lam), complex(rho),
                                  self.periodic * self.grid.exp_linear(dl, dr))

    def __add__(self, other):
        if not isinstance(other, QuasiPeriodicField):
            return NotImplemented
        other = other.rebase(self.lam, self.rho) if (other.lam, other.rho) != (self.lam, self.rho) else other
        return QuasiPeriodicField(self.lam, self.rho, self.periodic + other.periodic)

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return QuasiPeriodicField(self.lam, self.rho, -self.periodic)

    def __mul__(self, other):
        if isinstance(other, (QuasiPeriodicField, PeriodicField)):
            return product(self, other, dealias=False)
        return self.scale(other)

    __rmul__ = __mul__


def multiplier(f: QuasiPeriodicField, gamma: complex) -> complex:
    return complex(np.exp(f.lam * gamma + f.rho * np.conj(gamma)))


# ---------------------------------------------------------------------------
# operations


def _symbol(grid: TorusGrid, which: str) -> np.ndarray:
    if which in ("d", "dz", "del"):
        return grid.sym_d
    if which in ("dbar", "dzbar"):
        return grid.sym_dbar
    raise ValueError(f"unknown derivative {which!r}; use 'd' or 'dbar'")


def derivative(f, which: str = "d", order: int = 1):
    """Apply d or dbar ``order`` times; exact on band-limited data."""
    if order < 1:
        raise ValueError("order must be >= 1")
    sym = _symbol(f.grid, which)
    if isinstance(f, QuasiPeriodicField):
        shift = f.lam if sym is f.grid.sym_d else f.rho
        p = PeriodicField.from_hat(f.grid, f.periodic.hat * (sym + shift) ** order)
        return QuasiPeriodicField(f.lam, f.rho, p)
    return PeriodicField.from_hat(f.grid, f.hat * sym ** order)


def inverse_derivative_zero_mean(f: PeriodicField, which: str = "dbar") -> PeriodicField:
    """Zero-mean solution g of which(g) = f - mean(f)."""
    sym = _symbol(f.grid, which)
    hat = f.hat
    out = np.zeros_like(hat)
    nz = sym != 0
    out[nz] = hat[nz] / sym[nz]
    return PeriodicField.from_hat(f.grid, out)


class Moments(NamedTuple):
    mean: complex
    integral_dA: complex
    integral_dzdzbar: complex


def moments(f: PeriodicField) -> Moments:
    """Mean and integrals over the fundamental domain (dz^dzbar = -2i dx^dy)."""
    m = f.mean()
    return Moments(m, m * f.grid.area, -2j * m * f.grid.area)


def truncate(f: PeriodicField) -> PeriodicField:
    """2/3-rule spectral truncation."""
    return PeriodicField.from_hat(f.grid, np.where(f.grid.dealias_mask, f.hat, 0.0))


def product(f, g, dealias: bool = True):
    """Pointwise product; periodic parts truncated by the 2/3 rule when ``dealias``."""
    f.grid.check(g.grid)
    if isinstance(f, PeriodicField) and isinstance(g, PeriodicField):
        out = PeriodicField(f.grid, f.values * g.values)
        return truncate(out) if dealias else out
    qf, qg = QuasiPeriodicField.wrap(f), QuasiPeriodicField.wrap(g)
    lam, rho = qf.lam + qg.lam, qf.rho + qg.rho
    vals = qf.periodic.values * qg.periodic.values
    if f.grid.is_periodic_exponent(lam, rho):
        out = PeriodicField(f.grid, vals * f.grid.exp_linear(lam, rho))
        return truncate(out) if dealias else out
    p = PeriodicField(f.grid, vals)
    return QuasiPeriodicField(lam, rho, truncate(p) if dealias else p)


def as_periodic(f, tol: float = PERIODICITY_TOL) -> PeriodicField:
    """Collapse a quasi-periodic field whose prefactor is a lattice mode."""
    if isinstance(f, PeriodicField):
        return f
    if not f.grid.is_periodic_exponent(f.lam, f.rho, tol):
        raise NonPeriodicProduct(f"prefactor exponents {(f.lam, f.rho)} are not periodic")
    return PeriodicField(f.grid, f.values())


def random_band_limited(grid: TorusGrid, rng: np.random.Generator, n_modes: int = 8,
                        amplitude: float = 0.1, max_mode: int = 2, real: bool = False,
                        mean=None) -> PeriodicField:
    """Random field with ``n_modes`` Fourier modes of modulus <= ``amplitude``."""
    pool = [(a, b) for a in range(-max_mode, max_mode + 1) for b in range(-max_mode, max_mode + 1)
            if (a, b) != (0, 0)]
    idx = rng.choice(len(pool), size=min(n_modes, len(pool)), replace=False)
    modes = {}
    for i in idx:
        r = amplitude * rng.uniform(0.2, 1.0)
        modes[pool[i]] = r * np.exp(2j * np.pi * rng.uniform())
    f = PeriodicField.from_modes(grid, modes)
    if real:
        f = PeriodicField(grid, f.values.real)
    if mean is not None:
        f = f + complex(mean)
    return f
