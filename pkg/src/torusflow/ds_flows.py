"""DSII_n flows (n = 1, 2, 3 and mNV) for the reduction p = -u, q = conj(u).

The spinor evolution is psi_t = s A_n^+ psi, phi_t = s' A_n^- phi with
(s, s') = (i, -i) for n = 2 and (1, 1) otherwise.  Additional potentials:

    v  = dbar^{-1} d |u|^2                 (zero mean)
    w  = d dbar^{-1} (conj(u) u_z)
    w' = dbar d^{-1} (conj(u) u_zbar)
    v1 = 2 v, v2 = 2 conj(v)
    w1+ = w - v_z, w2+ = -w',  w1- = -w, w2- = w' - conj(v)_zbar
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
import scipy.fft as sp_fft

from .dirac import SpinorPair, WeierstrassData, dirac_residual
from .errors import GridMismatch, MnvRequiresReal, NumericalBlowup, StiffnessWarning
from .torus_field import PeriodicField, QuasiPeriodicField, TorusGrid
from .weierstrass import closure_report, willmore

LEVELS = (1, 2, 3, "mnv")
DEFAULT_DT = {1: 1e-3, 2: 1e-3, 3: 2e-4, "mnv": 2e-4}


class _Calc:
    """Spectral derivatives and (optionally dealiased) products on raw arrays.

    Truncation is linear, so sums of products are truncated once.
    """

    def __init__(self, grid: TorusGrid, dealias: bool = True):
        self.grid = grid
        self.dealias = dealias
        self.mask = grid.dealias_mask
        self.sd = grid.sym_d
        self.sdb = grid.sym_dbar
        self.fft = sp_fft.fft2
        self.ifft = sp_fft.ifft2

    def dh(self, h, order=1, shift=0.0):
        return self.ifft(h * (self.sd + shift) ** order)

    def dbh(self, h, order=1, shift=0.0):
        return self.ifft(h * (self.sdb + shift) ** order)

    def d(self, a, order=1, shift=0.0):
        return self.dh(self.fft(a), order, shift)

    def db(self, a, order=1, shift=0.0):
        return self.dbh(self.fft(a), order, shift)

    def trunc(self, a):
        if not self.dealias:
            return a
        return self.ifft(np.where(self.mask, self.fft(a), 0.0))

    def mul(self, a, b):
        return self.trunc(a * b)

    def inv_ratio(self, a, num, den):
        """Truncate a, then apply num/den mode-wise with the zero mode removed."""
        h = self.fft(a)
        out = np.zeros_like(h)
        nz = den != 0
        if self.dealias:
            nz &= self.mask
        out[nz] = h[nz] * num[nz] / den[nz]
        return self.ifft(out)


class Constraints(NamedTuple):
    v: np.ndarray
    w: np.ndarray
    wp: np.ndarray


def _constraints(calc: _Calc, u, level, shift=(0.0, 0.0)) -> Constraints:
    ub = np.conj(u)
    v = calc.inv_ratio(u * ub, calc.sd, calc.sdb)
    if level in (1, 2, "mnv"):
        z = np.zeros_like(u)
        return Constraints(v, z, z)
    h = calc.fft(u)
    w = calc.inv_ratio(ub * calc.dh(h), calc.sd, calc.sdb) + shift[0]
    wp = calc.inv_ratio(ub * calc.dbh(h), calc.sdb, calc.sd) + shift[1]
    return Constraints(v, w, wp)


def _rhs(calc: _Calc, u, cons: Constraints, level, lam=0.0, rho=0.0):
    """u_t for the periodic part of u e^{lam z + rho zbar}; constraints are periodic."""
    h = calc.fft(u)
    dh, dbh = calc.dh, calc.dbh
    if level == 1:
        return calc.ifft(h * (calc.sd + lam + calc.sdb + rho))
    v, vb = cons.v, np.conj(cons.v)
    if level == 2:
        lin = calc.ifft(h * ((calc.sd + lam) ** 2 + (calc.sdb + rho) ** 2))
        return 1j * (lin + calc.trunc(2 * (v + vb) * u))
    lin = calc.ifft(h * ((calc.sd + lam) ** 3 + (calc.sdb + rho) ** 3))
    adv = v * dh(h, 1, lam) + vb * dbh(h, 1, rho)
    if level == 3:
        return lin + calc.trunc(3 * adv + 3 * (cons.w + cons.wp) * u)
    if level == "mnv":
        return lin + calc.trunc(3 * adv + 1.5 * (calc.d(v) + calc.db(vb)) * u)
    raise ValueError(f"unknown level {level!r}")


# ---------------------------------------------------------------------------
# public constraint / rhs surface


def solve_constraints(u: PeriodicField, level=3, shift=(0.0, 0.0), dealias: bool = True):
    """Return (v,) for level 2 and (v, w, w') for level 3 as PeriodicFields."""
    calc = _Calc(u.grid, dealias)
    c = _constraints(calc, u.values, 3 if level in (3, "mnv") else level, shift)
    g = u.grid
    if level in (1, 2):
        return (PeriodicField(g, c.v),)
    return PeriodicField(g, c.v), PeriodicField(g, c.w), PeriodicField(g, c.wp)


def rhs(u, level=2, constraints=None, dealias: bool = True):
    """Time derivative of u for DSII_1, DS_2, DS_3 or mNV.

    ``u`` may be quasi-periodic (used by the gauge-variation check); the
    constraints are then taken from ``constraints`` or built from its periodic
    part.
    """
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    lam, rho = (u.lam, u.rho) if isinstance(u, QuasiPeriodicField) else (0.0, 0.0)
    base = u.periodic if isinstance(u, QuasiPeriodicField) else u
    if level == "mnv" and np.abs(base.values.imag).max() > 1e-10:
        raise MnvRequiresReal("mNV flow is defined only for real potentials")
    calc = _Calc(base.grid, dealias)
    if constraints is None:
        cons = _constraints(calc, base.values, level)
    else:
        vals = [c.values for c in constraints]
        z = np.zeros(base.grid.shape, complex)
        cons = Constraints(vals[0], vals[1] if len(vals) > 1 else z, vals[2] if len(vals) > 2 else z)
    ut = PeriodicField(base.grid, _rhs(calc, base.values, cons, level, lam, rho))
    if isinstance(u, QuasiPeriodicField):
        return QuasiPeriodicField(lam, rho, ut)
    return ut


# ---------------------------------------------------------------------------
# L, A, B operators


@dataclass(frozen=True, eq=False)
class TripleOperators:
    level: object
    sign: int
    grid: TorusGrid
    p: np.ndarray
    q: np.ndarray
    v1: np.ndarray
    v2: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    dealias: bool = True

    @property
    def calc(self) -> _Calc:
        return _Calc(self.grid, self.dealias)


def _reduction(u, sign):
    ub = np.conj(u)
    return (-u, ub) if sign > 0 else (-ub, u)


def _ops_from_arrays(calc: _Calc, u, level, sign, cons: Constraints) -> TripleOperators:
    p, q = _reduction(u, sign)
    v, vb = cons.v, np.conj(cons.v)
    if sign > 0:
        w1, w2 = cons.w - calc.d(v), -cons.wp
    else:
        w1, w2 = -cons.w, cons.wp - calc.db(vb)
    return TripleOperators(level, sign, calc.grid, p, q, 2 * v, 2 * vb, w1, w2, calc.dealias)


def triple_operators(u: PeriodicField, level=2, sign: int = +1, constraints=None,
                     dealias: bool = True, shift=(0.0, 0.0)) -> TripleOperators:
    calc = _Calc(u.grid, dealias)
    lev = 3 if level == "mnv" else level
    cons = _constraints(calc, u.values, lev, shift) if constraints is None else Constraints(
        *[c.values for c in constraints])
    return _ops_from_arrays(calc, u.values, lev, sign, cons)


def _apply_L(o: TripleOperators, calc, c1, c2, lam, rho):
    return (-calc.mul(o.p, c1) + calc.d(c2, 1, lam),
            -calc.db(c1, 1, rho) + calc.mul(o.q, c2))


def _apply_A(o: TripleOperators, calc: _Calc, c1, c2, lam, rho):
    tr = calc.trunc
    p, q = o.p, o.q
    if o.level == 1:
        h1, h2 = calc.fft(np.stack([c1, c2]))
        lin1 = calc.dh(h1, 1, lam)
        lin2 = calc.dbh(h2, 1, rho)
        n1, n2 = tr(np.stack([q * c2, p * c1]))
        return lin1 + n1, lin2 + n2
    h1, h2, hp, hq = calc.fft(np.stack([c1, c2, p, q]))
    sd, sdb = calc.sd + lam, calc.sdb + rho
    if o.level == 2:
        c1_z, c1_zz, c2_b, c2_bb, p_z, q_b = calc.ifft(np.stack([
            h1 * sd, h1 * sd ** 2, h2 * sdb, h2 * sdb ** 2, hp * calc.sd, hq * calc.sdb]))
        n1, n2 = tr(np.stack([-o.v1 * c1 + q * c2_b - q_b * c2,
                              -p * c1_z + p_z * c1 + o.v2 * c2]))
        return -c1_zz + n1, c2_bb + n2
    if o.level in (3, "mnv"):
        c1_z, c1_zz, c1_zzz, c2_b, c2_bb, c2_bbb, p_z, p_zz, q_b, q_bb = calc.ifft(np.stack([
            h1 * sd, h1 * sd ** 2, h1 * sd ** 3, h2 * sdb, h2 * sdb ** 2, h2 * sdb ** 3,
            hp * calc.sd, hp * calc.sd ** 2, hq * calc.sdb, hq * calc.sdb ** 2]))
        v2q, v1p = tr(np.stack([o.v2 * q, o.v1 * p]))
        n1, n2 = tr(np.stack([
            1.5 * o.v1 * c1_z - 3 * o.w1 * c1 + q * c2_bb - q_b * c2_b + (q_bb + 1.5 * v2q) * c2,
            p * c1_zz - p_z * c1_z + (p_zz + 1.5 * v1p) * c1 + 1.5 * o.v2 * c2_b - 3 * o.w2 * c2]))
        return c1_zzz + n1, c2_bbb + n2
    raise ValueError(f"unknown level {o.level!r}")


def _apply_B(o: TripleOperators, calc: _Calc, c1, c2, lam, rho):
    dh, dbh, tr = calc.dh, calc.dbh, calc.trunc
    p, q = o.p, o.q
    s = p + q
    h1, h2 = calc.fft(c1), calc.fft(c2)
    if o.level == 1:
        return (dbh(h1, 1, rho) - dh(h1, 1, lam) - tr(s * c2),
                -tr(s * c1) + dh(h2, 1, lam) - dbh(h2, 1, rho))
    hp, hq = calc.fft(p), calc.fft(q)
    if o.level == 2:
        vv = o.v1 + o.v2
        r1 = (dh(h1, 2, lam) + dbh(h1, 2, rho)
              + tr(vv * c1 - s * dbh(h2, 1, rho) + (dbh(hq) - 2 * dbh(hp)) * c2))
        r2 = (-dh(h2, 2, lam) - dbh(h2, 2, rho)
              + tr(s * dh(h1, 1, lam) + (2 * dh(hq) - dh(hp)) * c1 - vv * c2))
        return r1, r2
    if o.level in (3, "mnv"):
        def b11(h, c):
            return (dbh(h, 3, rho) - dh(h, 3, lam)
                    + tr(-1.5 * (o.v1 * dh(h, 1, lam) - o.v2 * dbh(h, 1, rho))
                         + 3 * (o.w1 - o.w2) * c))
        b12 = tr(-s * dbh(h2, 2, rho) - 1.5 * calc.mul(s, o.v2) * c2
                 - (3 * dbh(hp) - dbh(hq)) * dbh(h2, 1, rho)
                 - (3 * dbh(hp, 2) + dbh(hq, 2)) * c2)
        b21 = tr(-s * dh(h1, 2, lam) - 1.5 * calc.mul(s, o.v1) * c1
                 - (3 * dh(hq) - dh(hp)) * dh(h1, 1, lam)
                 - (3 * dh(hq, 2) + dh(hp, 2)) * c1)
        return b11(h1, c1) + b12, b21 - b11(h2, c2)
    raise ValueError(f"unknown level {o.level!r}")


def _apply_A_stable(o: TripleOperators, calc: _Calc, c1, c2, lam, rho):
    """(A + K L) chi, equal to A chi on the kernel of L.

    K = [[0, -1], [1, 0]], [[0, dbar], [d, 0]], [[0, -dbar^2], [d^2, 0]] for
    n = 1, 2, 3 turns the leading part of each row into d^n + dbar^n, whose
    symbol is purely imaginary; without it the components of chi off the
    kernel are amplified like exp(|kappa|^n t).
    """
    r1, r2 = _apply_A(o, calc, c1, c2, lam, rho)
    l1, l2 = _apply_L(o, calc, c1, c2, lam, rho)
    n = 3 if o.level == "mnv" else o.level
    if n == 1:
        return r1 - l2, r2 + l1
    return r1 + (-1) ** n * calc.db(l2, n - 1, rho), r2 + calc.d(l1, n - 1, lam)


def _spinor_out(chi: SpinorPair, r1, r2) -> SpinorPair:
    g = chi.grid
    return SpinorPair.from_periodic(chi.lam, chi.rho, PeriodicField(g, r1), PeriodicField(g, r2))


def apply_A(ops: TripleOperators, chi: SpinorPair) -> SpinorPair:
    """A_n chi with derivatives shifted by the prefactor exponents of chi."""
    if not chi.grid.compatible(ops.grid):
        raise GridMismatch("spinor and operators live on different grids")
    calc = ops.calc
    return _spinor_out(chi, *_apply_A(ops, calc, chi.p1.values, chi.p2.values, chi.lam, chi.rho))


def apply_B(ops: TripleOperators, chi: SpinorPair) -> SpinorPair:
    if not chi.grid.compatible(ops.grid):
        raise GridMismatch("spinor and operators live on different grids")
    calc = ops.calc
    return _spinor_out(chi, *_apply_B(ops, calc, chi.p1.values, chi.p2.values, chi.lam, chi.rho))


def time_factor(level, sign: int) -> complex:
    """Factor s in chi_t = s A chi (A -> iA, B -> iB for the even flow)."""
    if level == 2:
        return 1j if sign > 0 else -1j
    return 1.0


def triple_residual(level, sign: int, u: PeriodicField, u_t: PeriodicField,
                    test: SpinorPair) -> float:
    """Relative size of (L_t + s([L, A] - B L)) chi for the test spinor chi.

    Products are exact nodal products here; the caller keeps the total
    bandwidth below the grid resolution.
    """
    lev = 3 if level == "mnv" else level
    calc = _Calc(u.grid, dealias=False)
    cons = _constraints(calc, u.values, lev)
    ops = _ops_from_arrays(calc, u.values, lev, sign, cons)
    uv, utv = u.values, u_t.values
    if sign > 0:
        p_t, q_t = -utv, np.conj(utv)
    else:
        p_t, q_t = -np.conj(utv), utv
    c1, c2, lam, rho = test.p1.values, test.p2.values, test.lam, test.rho
    Lt = (-p_t * c1, q_t * c2)
    A1, A2 = _apply_A(ops, calc, c1, c2, lam, rho)
    LA = _apply_L(ops, calc, A1, A2, lam, rho)
    L1, L2 = _apply_L(ops, calc, c1, c2, lam, rho)
    AL = _apply_A(ops, calc, L1, L2, lam, rho)
    BL = _apply_B(ops, calc, L1, L2, lam, rho)
    s = time_factor(lev, sign)
    res = [Lt[k] + s * (LA[k] - AL[k] - BL[k]) for k in range(2)]
    norm = lambda pair: max(np.abs(pair[0]).max(), np.abs(pair[1]).max())
    scale = max(norm(Lt), norm(LA), norm(AL), norm(BL))
    return float(norm(res) / scale) if scale > 0 else 0.0


# ---------------------------------------------------------------------------
# time stepping


@dataclass(frozen=True, eq=False)
class FlowState:
    t: float
    u: PeriodicField
    data: WeierstrassData | None = None
    constraints: tuple | None = None

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    @classmethod
    def from_data(cls, data: WeierstrassData, t: float = 0.0) -> "FlowState":
        return cls(t, data.U, data, solve_constraints(data.U, 3))

    @classmethod
    def from_potential(cls, u: PeriodicField, t: float = 0.0) -> "FlowState":
        return cls(t, u, None, solve_constraints(u, 3))


class _Stepper:
    """RK4 on the stacked periodic parts (u, psi1, psi2, phi1, phi2)."""

    def __init__(self, grid, level, lam=0.0, rho=0.0, spinors=True, shift=(0.0, 0.0), dealias=True):
        if level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        self.calc = _Calc(grid, dealias)
        self.level = level
        self.lev_ops = 3 if level == "mnv" else level
        self.lam, self.rho = lam, rho
        self.spinors = spinors
        self.shift = shift
        self.sp, self.sm = time_factor(self.lev_ops, +1), time_factor(self.lev_ops, -1)

    def f(self, Y):
        calc = self.calc
        u = Y[0]
        cons = _constraints(calc, u, self.lev_ops, self.shift)
        ut = _rhs(calc, u, cons, self.level)
        if not self.spinors:
            return ut[None]
        ap = _ops_from_arrays(calc, u, self.lev_ops, +1, cons)
        am = _ops_from_arrays(calc, u, self.lev_ops, -1, cons)
        s1, s2 = _apply_A_stable(ap, calc, Y[1], Y[2], self.lam, self.rho)
        t1, t2 = _apply_A_stable(am, calc, Y[3], Y[4], -self.lam, -self.rho)
        return np.stack([ut, self.sp * s1, self.sp * s2, self.sm * t1, self.sm * t2])

    def step(self, Y, dt):
        k1 = self.f(Y)
        k2 = self.f(Y + 0.5 * dt * k1)
        k3 = self.f(Y + 0.5 * dt * k2)
        k4 = self.f(Y + dt * k3)
        return Y + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _pack(state: FlowState):
    if state.data is None:
        return state.u.values[None].copy()
    d = state.data
    return np.stack([state.u.values, d.psi.p1.values, d.psi.p2.values, d.phi.p1.values, d.phi.p2.values])


def _unpack(state: FlowState, Y, t) -> FlowState:
    g = state.grid
    u = PeriodicField(g, Y[0])
    if state.data is None:
        return FlowState(t, u, None, solve_constraints(u, 3))
    d = state.data
    psi = SpinorPair.from_periodic(d.psi.lam, d.psi.rho, PeriodicField(g, Y[1]), PeriodicField(g, Y[2]))
    phi = SpinorPair.from_periodic(d.phi.lam, d.phi.rho, PeriodicField(g, Y[3]), PeriodicField(g, Y[4]))
    return FlowState(t, u, WeierstrassData(psi, phi, u), solve_constraints(u, 3))


def _check(Y0, Y1, t):
    if not np.all(np.isfinite(Y1)):
        raise NumericalBlowup(f"non-finite values at t = {t:.6g}")
    scale = np.abs(Y0[0]).max()
    if scale > 0 and np.abs(Y1[0] - Y0[0]).max() > 0.1 * scale:
        warnings.warn(f"u changed by more than 10% in one step at t = {t:.6g}", StiffnessWarning)


def _stepper_for(state: FlowState, level, shift=(0.0, 0.0)) -> _Stepper:
    lam, rho = (state.data.psi.lam, state.data.psi.rho) if state.data is not None else (0.0, 0.0)
    return _Stepper(state.grid, level, lam, rho, state.data is not None, shift)


def step(state: FlowState, dt: float, level=2) -> FlowState:
    """One classical RK4 step of the coupled (u, psi, phi) system."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if level == "mnv" and np.abs(state.u.imag).max() > 1e-10:
        raise MnvRequiresReal("mNV flow is defined only for real potentials")
    st = _stepper_for(state, level)
    Y0 = _pack(state)
    Y1 = st.step(Y0, dt)
    _check(Y0, Y1, state.t + dt)
    return _unpack(state, Y1, state.t + dt)


def evolve(state: FlowState, dt: float, n_steps: int, level=2, monitor_every: int | None = None,
           on_record=None):
    """Advance ``n_steps`` RK4 steps; returns (final state, list of InvariantRecords)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if level == "mnv" and np.abs(state.u.imag).max() > 1e-10:
        raise MnvRequiresReal("mNV flow is defined only for real potentials")
    st = _stepper_for(state, level)
    records = []

    def emit(s):
        rec = monitor(s)
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    if monitor_every:
        emit(state)
    Y = _pack(state)
    t = state.t
    for n in range(1, n_steps + 1):
        Y1 = st.step(Y, dt)
        t = state.t + n * dt
        try:
            _check(Y, Y1, t)
        except NumericalBlowup:
            if monitor_every:
                emit(_unpack(state, Y1, t))
            raise
        Y = Y1
        if monitor_every and n % monitor_every == 0:
            emit(_unpack(state, Y, t))
    return _unpack(state, Y, t), records


def evolve_to(state: FlowState, t_end: float, dt: float, level=2, monitor_every: int | None = None,
              on_record=None):
    """Like ``evolve`` but shrinks dt slightly so that the last step lands on ``t_end``."""
    span = t_end - state.t
    if span <= 0:
        raise ValueError("t_end must be later than the current time")
    n = max(1, math.ceil(span / dt - 1e-9))
    return evolve(state, span / n, n, level, monitor_every, on_record)


# ---------------------------------------------------------------------------
# invariants


class InvariantRecord(NamedTuple):
    t: float
    willmore: float
    periods: np.ndarray       # (4, 2)
    J: np.ndarray             # (4,) complex
    dirac_psi: float
    dirac_phi: float
    closedness: float


def monitor(state: FlowState) -> InvariantRecord:
    W = willmore(state.u)
    if state.data is None:
        nan = float("nan")
        return InvariantRecord(state.t, W, np.full((4, 2), nan), np.full(4, nan, complex), nan, nan, nan)
    d = state.data
    rep = closure_report(d)
    return InvariantRecord(state.t, W, rep.periods, rep.J,
                           dirac_residual(d.psi, d.U), dirac_residual(d.phi, d.U, vee=True),
                           rep.closedness)


def gauge_variation_check(u: PeriodicField, a: complex) -> float:
    """Max deviation of d|u'|^2/dt - d|u|^2/dt from its closed form at t = 0.

    u' = e^{a z - conj(a) zbar} u evolves under DS_3 with the additional
    potentials of u.
    """
    a = complex(a)
    calc = _Calc(u.grid, True)
    uv = u.values
    cons = _constraints(calc, uv, 3)
    ut = _rhs(calc, uv, cons, 3)
    # periodic part of u' is u itself; its prefactor is unimodular
    upt = _rhs(calc, uv, cons, 3, a, -np.conj(a))
    lhs = 2 * (np.conj(uv) * upt).real - 2 * (np.conj(uv) * ut).real
    uz, uzz = calc.d(uv), calc.d(uv, 2)
    ub = np.conj(uv)
    ubz, ubzz = calc.d(ub), calc.d(ub, 2)
    closed = 6 * (a ** 2 * (uz * ub + uv * ubz) + a * (uzz * ub - uv * ubzz)).real
    return float(np.abs(lhs - closed).max())


def willmore_rate(u: PeriodicField, c: complex = 0.0, c_prime: complex = 0.0, dt: float = 1e-4) -> float:
    """Finite-difference W_t / W at t = 0 for DS_3 with w -> w + c, w' -> w' + c'."""
    st = _Stepper(u.grid, 3, spinors=False, shift=(complex(c), complex(c_prime)))
    Y = u.values[None]
    Wp = willmore(PeriodicField(u.grid, st.step(Y, dt)[0]))
    Wm = willmore(PeriodicField(u.grid, st.step(Y, -dt)[0]))
    return (Wp - Wm) / (2 * dt) / willmore(u)
