"""Zero-energy Floquet analysis of D = [[U, d], [-dbar, conj(U)]] on a torus.

A Bloch solution is psi = e^{lam z + rho zbar} * (truncated Fourier series).
For a real quasimomentum k the prefactor is e^{2 pi i (k1 x + k2 y)}, i.e.
lam = sym_d(2 pi k), rho = sym_dbar(2 pi k), and the multipliers are
mu_j = exp(2 pi i (k1 Re gamma_j + k2 Im gamma_j)).

The truncated Bloch matrix acts on coefficients (c1_m, c2_m) with
|m_j| <= cutoff.  U enters through convolution with its Fourier coefficients.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache
from typing import NamedTuple

import numpy as np
import scipy.linalg as la
import scipy.optimize as opt
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dirac import SpinorPair, dirac_residual
from .errors import CutoffTooLarge, EmptyZeroSet, NotOnCurve
from .torus_field import PeriodicField, TorusGrid

ZERO_TOL = 1e-6          # relative to the matrix scale
GAP_RATIO = 10.0
DROP_TOL = 1e-14         # Fourier coefficients of U below this (relative) are dropped


class SpectralSample(NamedTuple):
    k1: float
    k2: float
    sigma_min: float
    mu1: complex
    mu2: complex


class FloquetSolution(NamedTuple):
    spinor: SpinorPair
    sigma_min: float          # relative to the matrix scale
    gap_ratio: float          # sigma_2 / sigma_1
    degenerate: bool


def _sym(kx, ky):
    return 0.5j * (kx - 1j * ky), 0.5j * (kx + 1j * ky)


def exponents_for(k, grid: TorusGrid | None = None) -> tuple[complex, complex]:
    """(lam, rho) of the Bloch factor e^{2 pi i (k1 x + k2 y)}."""
    return _sym(2 * np.pi * k[0], 2 * np.pi * k[1])


def multipliers(grid: TorusGrid, lam: complex, rho: complex) -> tuple[complex, complex]:
    return tuple(complex(np.exp(lam * g + rho * np.conj(g))) for g in (grid.gamma1, grid.gamma2))


def multipliers_from_k(grid: TorusGrid, k) -> tuple[complex, complex]:
    """Exactly unimodular for real k."""
    return tuple(complex(np.exp(2j * np.pi * (k[0] * g.real + k[1] * g.imag)))
                 for g in (grid.gamma1, grid.gamma2))


@lru_cache(maxsize=16)
def _mode_table(cutoff: int):
    r = np.arange(-cutoff, cutoff + 1)
    m1, m2 = np.meshgrid(r, r, indexing="ij")
    return m1.ravel(), m2.ravel()


def _check_cutoff(grid: TorusGrid, cutoff: int) -> None:
    if cutoff < 0 or cutoff > min(grid.n1, grid.n2) / 3:
        raise CutoffTooLarge(f"cutoff {cutoff} exceeds N/3 for a {grid.n1}x{grid.n2} grid")


def _convolution_coo(grid: TorusGrid, hat: np.ndarray, cutoff: int):
    """Entries of T[n, m] = hat(n - m) on the truncation box; tiny entries dropped."""
    m1, m2 = _mode_table(cutoff)
    d1 = (m1[:, None] - m1[None, :]) % grid.n1
    d2 = (m2[:, None] - m2[None, :]) % grid.n2
    big = np.abs(hat).max()
    keep = np.abs(hat) > DROP_TOL * big if big > 0 else np.zeros(hat.shape, bool)
    rows, cols = np.nonzero(keep[d1, d2])
    return rows, cols, hat[d1[rows, cols], d2[rows, cols]]


class BlochFamily:
    """Bloch matrices of one potential for varying exponents (lam, rho).

    The convolution blocks are assembled once; only the derivative diagonals
    change with the exponents.
    """

    def __init__(self, U: PeriodicField, cutoff: int = 8, vee: bool = False):
        grid = U.grid
        _check_cutoff(grid, cutoff)
        self.grid, self.cutoff, self.vee = grid, cutoff, vee
        m1, m2 = _mode_table(cutoff)
        n = self.n = m1.size
        kx = 2 * np.pi * (m1 * grid.dual1[0] + m2 * grid.dual2[0])
        ky = 2 * np.pi * (m1 * grid.dual1[1] + m2 * grid.dual2[1])
        self.sd, self.sdb = _sym(kx, ky)
        hat = U.hat
        # hat of conj(U) at mode n is conj(hat(-n))
        hat_bar = np.conj(np.roll(hat[::-1, ::-1], 1, axis=(0, 1)))
        if vee:
            hat, hat_bar = hat_bar, hat
        r1, c1, v1 = _convolution_coo(grid, hat, cutoff)
        r2, c2, v2 = _convolution_coo(grid, hat_bar, cutoff)
        idx = np.arange(n)
        self.rows = np.concatenate([r1, r2 + n, idx, idx + n])
        self.cols = np.concatenate([c1, c2 + n, idx + n, idx])
        self.fixed = np.concatenate([v1, v2]).astype(complex)

    def matrix(self, lam: complex, rho: complex) -> sp.csc_matrix:
        vals = np.concatenate([self.fixed, lam + self.sd, -(rho + self.sdb)])
        return sp.csc_matrix((vals, (self.rows, self.cols)), shape=(2 * self.n, 2 * self.n))


def _bloch_sparse(U: PeriodicField, lam: complex, rho: complex, cutoff: int,
                  vee: bool = False) -> sp.csc_matrix:
    return BlochFamily(U, cutoff, vee).matrix(lam, rho)


def assemble_bloch_exponents(U: PeriodicField, lam: complex, rho: complex, cutoff: int = 8,
                             vee: bool = False) -> np.ndarray:
    """Dense Bloch matrix of D (or D^vee) for the prefactor e^{lam z + rho zbar}."""
    return _bloch_sparse(U, lam, rho, cutoff, vee).toarray()


def assemble_bloch(U: PeriodicField, k, cutoff: int = 8) -> np.ndarray:
    lam, rho = exponents_for(k)
    return assemble_bloch_exponents(U, lam, rho, cutoff)


_SCALE_CACHE: dict = {}


def matrix_scale(U: PeriodicField, cutoff: int = 8) -> float:
    """Largest singular value at k = 0; a k-independent normalization."""
    g = U.grid
    key = (g.n1, g.n2, g.gamma1, g.gamma2, cutoff, U.values.tobytes())
    if key not in _SCALE_CACHE:
        if len(_SCALE_CACHE) > 64:
            _SCALE_CACHE.clear()
        M = assemble_bloch_exponents(U, 0.0, 0.0, cutoff)
        _SCALE_CACHE[key] = float(la.svdvals(M)[0])
    return _SCALE_CACHE[key]


def dispersion_residual(U: PeriodicField, k, cutoff: int = 8) -> float:
    """sigma_min of the Bloch matrix at k divided by the k = 0 scale."""
    s = la.svdvals(assemble_bloch(U, k, cutoff))
    return float(s[-1] / matrix_scale(U, cutoff))


def dispersion_residual_exponents(U: PeriodicField, lam, rho, cutoff: int = 8, vee=False) -> float:
    s = la.svdvals(assemble_bloch_exponents(U, lam, rho, cutoff, vee))
    return float(s[-1] / matrix_scale(U, cutoff))


# ---------------------------------------------------------------------------
# fast surrogates used by the scanner


def _perm_sign(perm: np.ndarray) -> int:
    """Parity from the number of cycles; cycles are labelled by pointer doubling."""
    n = perm.size
    lab = np.minimum(np.arange(n), perm)
    jump = perm.copy()
    for _ in range(max(1, int(np.ceil(np.log2(n))) + 1)):
        lab = np.minimum(lab, lab[jump])
        jump = jump[jump]
    cycles = int(np.count_nonzero(lab == np.arange(n)))
    return -1 if (n - cycles) % 2 else 1


def _log_det(M: sp.csc_matrix) -> tuple[float, complex]:
    """(log|det M|, det M / |det M|) from a sparse LU; -inf for exactly singular M."""
    try:
        lu = spla.splu(M)
    except RuntimeError:
        return -np.inf, 1.0
    d = lu.U.diagonal()
    mag = np.abs(d)
    if np.any(mag == 0):
        return -np.inf, 1.0
    phase = np.prod(d / mag) * _perm_sign(lu.perm_r) * _perm_sign(lu.perm_c)
    return float(np.log(mag).sum()), complex(phase)


def _sigma_min_sparse(M: sp.csc_matrix, iters: int = 30) -> float:
    """Smallest singular value by inverse iteration on M^H M."""
    try:
        lu = spla.splu(M)
    except RuntimeError:
        return 0.0
    rng = np.random.default_rng(0)
    x = rng.standard_normal(M.shape[0]) + 1j * rng.standard_normal(M.shape[0])
    x /= np.linalg.norm(x)
    est = np.inf
    for _ in range(iters):
        y = lu.solve(lu.solve(x), trans="H")
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0:
            return 0.0
        new = 1.0 / math.sqrt(ny)
        x = y / ny
        if abs(new - est) <= 1e-10 * new:
            est = new
            break
        est = new
    return float(est)


class _Scanner:
    def __init__(self, U, cutoff, offset=(0.0, 0.0)):
        self.family = BlochFamily(U, cutoff)
        self.offset = offset
        self.calls = 0

    def exps(self, k1, k2):
        lam, rho = exponents_for((k1, k2))
        return lam + self.offset[0], rho + self.offset[1]

    def matrix(self, k1, k2):
        return self.family.matrix(*self.exps(k1, k2))

    def log_det(self, k1, k2):
        self.calls += 1
        return _log_det(self.matrix(k1, k2))

    def sigma(self, k1, k2):
        return _sigma_min_sparse(self.matrix(k1, k2))


def default_window(grid: TorusGrid):
    """Bounding box of the dual cell centred at k = 0 (one cell for rectangular lattices)."""
    d = np.abs(np.array([grid.dual1, grid.dual2]))
    h1, h2 = 0.5 * d[:, 0].max(), 0.5 * d[:, 1].max()
    return (-h1, h1), (-h2, h2)


def _make_sample(grid, sc: _Scanner, k1, k2, sigma, scale):
    if sc.offset == (0.0, 0.0):
        mu1, mu2 = multipliers_from_k(grid, (k1, k2))
    else:
        mu1, mu2 = multipliers(grid, *sc.exps(k1, k2))
    return SpectralSample(float(k1), float(k2), float(sigma / scale), mu1, mu2)


def scan_zero_set(U: PeriodicField, k_window=None, resolution: int = 64, cutoff: int = 8,
                  tol: float = ZERO_TOL, offset=(0.0, 0.0), polish: bool = True) -> list[SpectralSample]:
    """Sample the real zero set of the dispersion relation in a k-window.

    Edges of the sample grid where Re(det) changes sign are refined with
    Brent's method; remaining grid-local minima of |det| are polished with a
    simplex search.  Candidates are kept when the relative smallest singular
    value is below ``tol``.  ``offset`` shifts (lam, rho) by a constant, which
    is how gauged potentials with complex multipliers are rescanned.
    """
    grid = U.grid
    _check_cutoff(grid, cutoff)
    (a1, b1), (a2, b2) = k_window or default_window(grid)
    k1s = np.linspace(a1, b1, resolution)
    k2s = np.linspace(a2, b2, resolution)
    h = min(k1s[1] - k1s[0], k2s[1] - k2s[0])
    sc = _Scanner(U, cutoff, tuple(complex(o) for o in offset))
    scale = matrix_scale(U, cutoff)

    logabs = np.empty((resolution, resolution))
    phase = np.empty((resolution, resolution), complex)
    for i, k1 in enumerate(k1s):
        for j, k2 in enumerate(k2s):
            logabs[i, j], phase[i, j] = sc.log_det(k1, k2)
    finite = np.isfinite(logabs)
    ref = np.median(logabs[finite]) if finite.any() else 0.0

    def surrogate(k1, k2):
        la_, ph = sc.log_det(k1, k2)
        if not np.isfinite(la_):
            return 0.0
        return (ph * np.exp(min(la_ - ref, 700.0))).real

    sgn = np.sign(phase.real)
    sgn[~finite] = 0
    candidates = []
    touched = np.zeros_like(finite)
    xtol = 1e-6 * h
    for axis in (0, 1):
        a = sgn[:-1, :] if axis == 0 else sgn[:, :-1]
        b = sgn[1:, :] if axis == 0 else sgn[:, 1:]
        for i, j in zip(*np.nonzero(a * b < 0)):
            if axis == 0:
                f = lambda t, j=j: surrogate(t, k2s[j])
                t = opt.brentq(f, k1s[i], k1s[i + 1], xtol=xtol)
                candidates.append((t, k2s[j]))
                touched[i:i + 2, j] = True
            else:
                f = lambda t, i=i: surrogate(k1s[i], t)
                t = opt.brentq(f, k2s[j], k2s[j + 1], xtol=xtol)
                candidates.append((k1s[i], t))
                touched[i, j:j + 2] = True
    for i, j in zip(*np.nonzero(~finite)):
        candidates.append((k1s[i], k2s[j]))
        touched[i, j] = True

    if polish:
        for i in range(1, resolution - 1):
            for j in range(1, resolution - 1):
                block = logabs[i - 1:i + 2, j - 1:j + 2]
                if not finite[i, j] or touched[i - 1:i + 2, j - 1:j + 2].any():
                    continue
                if logabs[i, j] > block.min() or logabs[i, j] >= np.sort(block.ravel())[1]:
                    continue
                res = opt.minimize(lambda kk: sc.log_det(*kk)[0], [k1s[i], k2s[j]],
                                   method="Nelder-Mead",
                                   options={"xatol": xtol, "fatol": 1e-12, "maxiter": 400})
                candidates.append(tuple(res.x))

    samples = []
    for k1, k2 in candidates:
        sigma = sc.sigma(k1, k2)
        if sigma / scale < tol:
            samples.append(_make_sample(grid, sc, k1, k2, sigma, scale))
    samples = _merge(samples, 1e-3 * h)
    if not samples:
        warnings.warn("no zero-set samples found in the scan window", EmptyZeroSet)
    return samples


def _merge(samples, radius):
    """Drop near-duplicates and order by (k1, k2)."""
    out = []
    for s in sorted(samples, key=lambda s: (s.k1, s.k2)):
        if out and any(abs(s.k1 - o.k1) < radius and abs(s.k2 - o.k2) < radius for o in out[-8:]):
            continue
        out.append(s)
    return out


def multipliers_with_gauge(sample: SpectralSample, a: complex, grid: TorusGrid):
    """(mu, mu') with mu'_j = e^{-a gamma_j} mu_j under u -> e^{a z - conj(a) zbar} u."""
    mu = (sample.mu1, sample.mu2)
    fac = (np.exp(-a * grid.gamma1), np.exp(-a * grid.gamma2))
    return mu, (complex(mu[0] * fac[0]), complex(mu[1] * fac[1]))


def gauge_potential(U: PeriodicField, a: complex) -> PeriodicField:
    """e^{a z - conj(a) zbar} U; requires the factor to be doubly periodic."""
    grid = U.grid
    a = complex(a)
    if not grid.is_periodic_exponent(a, -np.conj(a)):
        raise ValueError("e^{a z - conj(a) zbar} is not periodic on this lattice")
    return PeriodicField(grid, grid.exp_linear(a, -np.conj(a)) * U.values)


# ---------------------------------------------------------------------------
# Floquet eigenfunctions


def _spinor_from_vector(grid, vec, cutoff, lam, rho) -> SpinorPair:
    m1, m2 = _mode_table(cutoff)
    n = m1.size
    hats = []
    for part in (vec[:n], vec[n:]):
        h = np.zeros(grid.shape, complex)
        h[m1 % grid.n1, m2 % grid.n2] = part
        hats.append(PeriodicField.from_hat(grid, h))
    return SpinorPair.from_periodic(lam, rho, hats[0], hats[1])


def floquet_nullspace_exponents(U: PeriodicField, lam: complex, rho: complex, cutoff: int = 8,
                                vee: bool = False, tol: float = ZERO_TOL) -> FloquetSolution:
    """Near-null vector of the Bloch matrix for prefactor exponents (lam, rho)."""
    grid = U.grid
    M = assemble_bloch_exponents(U, lam, rho, cutoff, vee)
    _, s, Vh = la.svd(M)
    scale = matrix_scale(U, cutoff)
    smin = s[-1] / scale
    if smin >= tol:
        raise NotOnCurve(f"relative sigma_min {smin:.3e} is not below {tol:.1e}")
    gap = float(s[-2] / s[-1]) if s[-1] > 0 else np.inf
    near = s < max(tol * scale, GAP_RATIO * s[-1])
    degenerate = gap < GAP_RATIO or np.count_nonzero(near) > 1
    if degenerate:
        # pick the combination inside the near-null space with the largest mode-0 content
        sub = Vh[near].conj().T
        n = sub.shape[0] // 2
        m1, m2 = _mode_table(cutoff)
        i0 = int(np.nonzero((m1 == 0) & (m2 == 0))[0][0])
        _, _, wh = la.svd(sub[[i0, n + i0], :])
        vec = sub @ wh[0].conj()
    else:
        vec = Vh[-1].conj()
    vec = vec / np.abs(vec).max()
    spinor = _spinor_from_vector(grid, vec, cutoff, lam, rho)
    return FloquetSolution(spinor, float(smin), gap, bool(degenerate))


def floquet_nullspace(U: PeriodicField, k, cutoff: int = 8, tol: float = ZERO_TOL) -> FloquetSolution:
    lam, rho = exponents_for(k)
    return floquet_nullspace_exponents(U, lam, rho, cutoff, tol=tol)


def floquet_dirac_residual(sol: FloquetSolution, U: PeriodicField, vee: bool = False) -> float:
    return dirac_residual(sol.spinor, U, vee=vee)
