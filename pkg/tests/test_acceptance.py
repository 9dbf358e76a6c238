"""The eleven acceptance criteria; each test prints one PASS/FAIL line."""
import itertools

import numpy as np
import pytest

from torusflow import ds_flows as F
from torusflow import spectral_curve as S
from torusflow.dirac import SpinorPair, admissible_gauge_basis, gauge_transform
from torusflow.fixtures import CLIFFORD_U, clifford_data, perturbed_clifford, product_torus, square_grid
from torusflow.torus_field import PeriodicField, random_band_limited
from torusflow.weierstrass import (closedness_residual, closure_report, forms_from_spinors,
                                   integrate_surface, weierstrass_data_from_immersion, willmore)

TWO_PI = 2 * np.pi
W_CT = 2 * np.pi ** 2


@pytest.fixture
def report(capsys):
    def _report(number, title, checks):
        ok = all(v < tol for _, v, tol in checks)
        detail = "; ".join(f"{name} {v:.2e} < {tol:.0e}" for name, v, tol in checks)
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d} ({title}): {detail}")
        for name, v, tol in checks:
            assert v < tol, f"criterion {number}: {name} = {v:.3e} is not below {tol:.1e}"
    return _report


def _rotation(X, angle):
    c, s = np.cos(angle), np.sin(angle)
    Y = X.copy()
    Y[0], Y[1] = c * X[0] - s * X[1], s * X[0] + c * X[1]
    return Y


def test_criterion_01_clifford_lift(report):
    data = weierstrass_data_from_immersion(product_torus(square_grid(32)))
    absU = np.abs(data.U.values)
    report(1, "Clifford lift", [
        ("max||U|-1/(2 sqrt 2)|", float(np.abs(absU - 1 / (2 * np.sqrt(2))).max()), 1e-9),
        ("|W-2pi^2|", abs(willmore(data.U) - W_CT), 1e-8),
    ])


def test_criterion_02_closure(report):
    data = clifford_data(square_grid(32))
    rep = closure_report(data)
    report(2, "closure", [
        ("closedness", closedness_residual(forms_from_spinors(data)), 1e-12),
        ("max|V|", float(np.abs(rep.periods).max()), 1e-12),
        ("max|J|", float(np.abs(rep.J).max()), 1e-12),
    ])


def _test_spinor(grid, rng):
    p1 = random_band_limited(grid, rng, n_modes=4, amplitude=1.0, mean=1.0)
    p2 = random_band_limited(grid, rng, n_modes=4, amplitude=1.0, mean=-0.5j)
    lam = complex(*rng.normal(size=2)) * 0.3
    rho = complex(*rng.normal(size=2)) * 0.3
    return SpinorPair.from_periodic(lam, rho, p1, p2)


def test_criterion_03_triple_oracle(report):
    grid = square_grid(32)
    rng = np.random.default_rng(2024)
    worst = {case: 0.0 for case in itertools.product((2, 3), (1, -1))}
    for _ in range(20):
        u = random_band_limited(grid, rng, n_modes=8, amplitude=0.1)
        chi = _test_spinor(grid, rng)
        for level, sign in worst:
            ut = F.rhs(u, level, dealias=False)
            worst[level, sign] = max(worst[level, sign], F.triple_residual(level, sign, u, ut, chi))
    report(3, "triple identity, 20 potentials",
           [(f"level {lv} sign {'+' if sg > 0 else '-'}", r, 1e-8) for (lv, sg), r in worst.items()])


def test_criterion_04_mnv_reduction(report):
    grid = square_grid(32)
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(20):
        u = random_band_limited(grid, rng, n_modes=8, amplitude=0.1, real=True)
        worst = max(worst, float(np.abs(F.rhs(u, 3).values - F.rhs(u, "mnv").values).max()))
    report(4, "mNV reduction, 20 real potentials", [("max|rhs3-rhs_mnv|", worst, 1e-10)])


def test_criterion_05_ds2_clifford(report):
    s0 = F.FlowState.from_data(clifford_data(square_grid(32)))
    s, rec = F.evolve_to(s0, 1.0, 1e-3, 2, monitor_every=100)
    growth = []
    # spinor amplitudes at the final time against e^{t/4}
    for chi, chi0 in ((s.data.psi, s0.data.psi), (s.data.phi, s0.data.phi)):
        for p, p0 in ((chi.p1, chi0.p1), (chi.p2, chi0.p2)):
            growth.append(float(np.abs(np.abs(p.values) / np.abs(p0.values) / np.exp(0.25) - 1).max()))
    report(5, "DS2 on Clifford, t in [0, 1]", [
        ("max|u-(1+i)/4|", float(np.abs(s.u.values - CLIFFORD_U).max()), 1e-10),
        ("|psi|/|psi0| vs e^(t/4)", max(growth), 1e-6),
        ("W drift", max(abs(r.willmore - W_CT) for r in rec) / W_CT, 1e-8),
        ("closure", max(max(np.abs(r.periods).max(), np.abs(r.J).max()) for r in rec), 1e-10),
    ])


def test_criterion_06_ds3_clifford_rotation(report):
    data = clifford_data(square_grid(32))
    # dt = 5e-4 is inside the RK4 stability range of the cubic symbols at N = 32
    s, _ = F.evolve_to(F.FlowState.from_data(data), 1.0, 5e-4, 3)
    X0 = integrate_surface(forms_from_spinors(data)).coordinates()
    X1 = integrate_surface(forms_from_spinors(s.data)).coordinates()
    # both surfaces are normalized to zero centroid, which aligns the basepoints
    err = float(np.abs(X1 - _rotation(X0, 1 / 8)).max())
    report(6, "DS3 on Clifford, rotation by 1/8 at t = 1", [("max vertex error", err, 1e-6)])


def _relative_drift(records):
    r0 = records[0]
    W = max(abs(r.willmore - r0.willmore) for r in records) / r0.willmore
    Vs = max(1.0, float(np.abs(r0.periods).max()))
    Js = max(1.0, float(np.abs(r0.J).max()))
    V = max(float(np.abs(r.periods - r0.periods).max()) for r in records) / Vs
    J = max(float(np.abs(r.J - r0.J).max()) for r in records) / Js
    return W, V, J


def test_criterion_07_generic_conservation(report):
    data = perturbed_clifford(square_grid(32), eps=0.1)
    s0 = F.FlowState.from_data(data)
    checks = []
    for level, dts in ((2, (1e-2, 5e-3, 1.25e-3)), (3, (5e-4, 2.5e-4, 6.25e-5))):
        finals = []
        for dt in dts:
            s, rec = F.evolve_to(s0, 0.05, dt, level, monitor_every=10)
            finals.append(F._pack(s))
            if dt == dts[1]:
                W, V, J = _relative_drift(rec)
                checks += [(f"DS{level} W drift", W, 1e-6), (f"DS{level} V drift", V, 1e-6),
                           (f"DS{level} J drift", J, 1e-6)]
        e1 = np.abs(finals[0] - finals[2]).max()
        e2 = np.abs(finals[1] - finals[2]).max()
        # order 4: halving dt divides the error by ~16; accept 2^3.5 .. 2^4.5
        checks.append((f"DS{level} |log2(err ratio) - 4|", abs(np.log2(e1 / e2) - 4), 0.5))
    report(7, "generic conservation and order 4", checks)


def test_criterion_08_broken_conservation(report):
    u = perturbed_clifford(square_grid(32), eps=0.1).U
    c = cp = 0.25
    k = (c + cp + np.conj(c) + np.conj(cp)).real
    rate = F.willmore_rate(u, c, cp)
    report(8, "broken conservation, k = 1", [("|(dW/dt)/W / 3 - 1|", abs(rate / (3 * k) - 1), 1e-2)])


def test_criterion_09_gauge_structure(report):
    grid = square_grid(32)
    w1, w2 = admissible_gauge_basis(grid)
    worst_f = worst_w = worst_c = 0.0
    for data in (clifford_data(grid), perturbed_clifford(grid, eps=0.1)):
        f0 = forms_from_spinors(data)
        r0 = closure_report(data)
        for a, b in ((0.3 - 0.2j, 0), (0.1j, w1), (-0.4, w1 - 2 * w2), (1 + 1j, 2 * w2)):
            g = gauge_transform(data, a, b)
            worst_f = max(worst_f, max(float(np.abs(p.values - q.values).max())
                                       for p, q in zip(f0, forms_from_spinors(g))))
            worst_w = max(worst_w, abs(willmore(g.U) - willmore(data.U)))
            r1 = closure_report(g)
            worst_c = max(worst_c, float(np.abs(r1.periods - r0.periods).max()),
                          float(np.abs(r1.J - r0.J).max()))
    u = random_band_limited(grid, np.random.default_rng(5), amplitude=0.1)
    report(9, "gauge structure", [
        ("forms", worst_f, 1e-12), ("W", worst_w, 1e-12), ("closure data", worst_c, 1e-12),
        ("gauge variation a=0.1+0.2i", F.gauge_variation_check(u, 0.1 + 0.2j), 1e-8),
    ])


def test_criterion_10_spectral_scanner(report):
    import time
    grid = square_grid(32)
    U = PeriodicField.constant(grid, 0.5)
    a = 0.5
    t0 = time.perf_counter()
    samples = S.scan_zero_set(U, resolution=64, cutoff=8)
    (k1a, k1b), _ = S.default_window(grid)
    cell = (k1b - k1a) / 63 * TWO_PI
    pts = np.array([[s.k1, s.k2] for s in samples]) * TWO_PI
    centres = np.array(list(itertools.product(range(-2, 3), repeat=2)))
    dist = np.abs(np.hypot(*(pts[:, None] - centres[None]).transpose(2, 0, 1)) - 1).min(axis=1)
    unimod = max(max(abs(abs(s.mu1) - 1), abs(abs(s.mu2) - 1)) for s in samples)
    # gauge action on multipliers against direct evaluation of e^{-a gamma}
    action = 0.0
    for s in samples:
        _, (m1, m2) = S.multipliers_with_gauge(s, a, grid)
        action = max(action, abs(m1 - np.exp(-a * TWO_PI) * s.mu1), abs(m2 - np.exp(-a * TWO_PI * 1j) * s.mu2))
    # end-to-end: rescan the gauged potential; zero sets coincide and multipliers match
    Up = S.gauge_potential(U, a)
    gauged = S.scan_zero_set(Up, resolution=64, cutoff=8, offset=(-a, 0.0))
    elapsed = time.perf_counter() - t0
    q = np.array([[s.k1, s.k2] for s in gauged]) * TWO_PI
    dpq = np.hypot(*(pts[:, None] - q[None]).transpose(2, 0, 1))
    hausdorff = max(dpq.min(axis=1).max(), dpq.min(axis=0).max())
    mu_err = 0.0
    for j, s in enumerate(gauged):
        i = int(dpq[:, j].argmin())
        _, mg = S.multipliers_with_gauge(samples[i], a, grid)
        # multipliers move by at most |gamma| |mu| per unit of kappa between neighbouring samples
        bound = TWO_PI * max(abs(mg[0]), abs(mg[1])) * dpq[i, j]
        mu_err = max(mu_err, max(abs(s.mu1 - mg[0]), abs(s.mu2 - mg[1])) - bound)
    report(10, "spectral scanner, U = 1/2", [
        ("max circle deviation / cell", float(dist.max()) / cell, 1.0),
        ("max||mu|-1|", unimod, 1e-10),
        ("gauge action", action, 1e-14),
        ("rescan Hausdorff / cell diagonal", hausdorff / (np.sqrt(2) * cell), 1.0),
        ("rescan multiplier excess", max(mu_err, 0.0), 1e-6),
        ("runtime s / 60", elapsed / 60, 1.0),
    ])


def test_criterion_11_ds1_translation(report):
    grid = square_grid(32)
    u0 = random_band_limited(grid, np.random.default_rng(11), amplitude=0.1)
    s, _ = F.evolve_to(F.FlowState.from_potential(u0), 0.5, 1e-3, 1)
    # evaluate the band-limited u0 at (x + t, y) mode by mode
    hat = u0.hat
    m1, m2 = grid.modes
    exact = np.zeros(grid.shape, complex)
    for i, j in zip(*np.nonzero(np.abs(hat) > 0)):
        exact += hat[i, j] * np.exp(1j * (m1[i, 0] * (grid.x + 0.5) + m2[0, j] * grid.y))
    report(11, "DSII_1 translation at t = 0.5", [("max|u-u0(x+t,y)|", float(np.abs(s.u.values - exact).max()), 1e-8)])
