"""Scenario configuration, orchestration and file output.

Config files are INI-style text::

    [scenario]
    name = ds3_flow

    [lattice]
    gamma1 = 2*pi, 0
    gamma2 = 0, 2*pi

    [potential]
    kind = clifford

    [flow]
    t_end = 1.0

Numbers may use ``pi`` and the arithmetic operators; complex numbers are
written ``0.1+0.05i`` and lattice vectors as ``re, im`` pairs.
"""
from __future__ import annotations

import ast
import configparser
import json
import math
import operator
import os
import re
import tempfile
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ParseError, UnsupportedProjection, ValidationError

SCENARIOS = {
    "clifford": "lift the product torus of two circles and check |U|, W and closure",
    "constant_potential": "Floquet spinors for a constant potential; Dirac residuals and W",
    "ds1_flow": "DSII_1 (translation) flow of the configured data",
    "ds2_flow": "DS_2 flow with invariant trace",
    "ds3_flow": "DS_3 flow with invariant trace",
    "mnv_flow": "mNV flow of a real potential",
    "spectral_scan": "zero set of the dispersion relation in one dual cell",
    "gauge_family": "lifts over a grid of admissible gauges; |U| and W must agree",
}
FLOW_LEVELS = {"ds1_flow": 1, "ds2_flow": 2, "ds3_flow": 3, "mnv_flow": "mnv"}
POTENTIAL_KINDS = ("clifford", "perturbed_clifford", "plane_wave", "constant", "modes", "random")

# ---------------------------------------------------------------------------
# value parsing

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}
_NAMES = {"pi": math.pi, "i": 1j, "j": 1j}


def _eval_node(node):
    if isinstance(node, ast.Expression):
        return _eval_node(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_node(node.left), _eval_node(node.right))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        return _UNARY[type(node.op)](_eval_node(node.operand))
    raise ValueError("unsupported expression")


def parse_number(text: str) -> complex:
    """Arithmetic on numbers and ``pi``; a trailing ``i`` marks an imaginary literal."""
    s = text.strip()
    s = re.sub(r"(\d(?:\.\d*)?(?:[eE][+-]?\d+)?)\s*[ij]\b", r"\1j", s)
    try:
        return complex(_eval_node(ast.parse(s, mode="eval")))
    except (SyntaxError, ValueError, TypeError, ZeroDivisionError):
        raise ValueError(f"cannot parse number {text!r}") from None


def parse_real(text: str) -> float:
    v = parse_number(text)
    if v.imag != 0:
        raise ValueError(f"expected a real number, got {text!r}")
    return v.real


def parse_int(text: str) -> int:
    v = parse_real(text)
    if v != int(v):
        raise ValueError(f"expected an integer, got {text!r}")
    return int(v)


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def parse_pair(text: str) -> complex:
    """``re, im`` -> complex; a single number is accepted as well."""
    parts = [p for p in text.split(",")]
    if len(parts) == 1:
        return parse_number(parts[0])
    if len(parts) != 2:
        raise ValueError(f"expected 're, im', got {text!r}")
    return complex(parse_real(parts[0]), parse_real(parts[1]))


def parse_reals(n: int):
    def parse(text: str):
        vals = [parse_real(p) for p in text.split(",")]
        if len(vals) != n:
            raise ValueError(f"expected {n} comma-separated numbers, got {text!r}")
        return tuple(vals)
    return parse


_MODE_RE = re.compile(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)\s*:\s*([^,()]+)")


def parse_modes(text: str) -> dict:
    """``(1,0):0.1+0.05i, (0,1):0.02`` -> {(1, 0): (0.1+0.05j), (0, 1): 0.02}."""
    out = {}
    pos = 0
    for m in _MODE_RE.finditer(text):
        gap = text[pos:m.start()].strip().strip(",").strip()
        if gap:
            raise ValueError(f"unexpected text {gap!r} in mode list")
        key = (int(m.group(1)), int(m.group(2)))
        if key in out:
            raise ValueError(f"mode {key} given twice")
        out[key] = parse_number(m.group(3))
        pos = m.end()
    if text[pos:].strip().strip(","):
        raise ValueError(f"unexpected text {text[pos:].strip()!r} in mode list")
    if not out:
        raise ValueError("empty mode list")
    return out


def parse_projection(text: str):
    """``drop4``, ``orth: u1, u2, u3, u4`` or ``stereo: p1, p2, p3, p4``."""
    name, _, rest = text.partition(":")
    name = name.strip().lower()
    if name == "drop4" and not rest.strip():
        return ("drop4", None)
    if name in ("orth", "stereo"):
        vec = np.array(parse_reals(4)(rest) if rest.strip() else (0.0, 0.0, 0.0, 1.0))
        return (name, tuple(float(v) for v in vec))
    raise UnsupportedProjection(f"unknown projection {text!r}")


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PotentialSpec:
    kind: str = "clifford"
    value: complex = 0.5
    modes: dict = field(default_factory=dict)
    radius: float = 1.0
    eps: float = 0.1
    amplitude: float = 0.1
    max_mode: int = 2
    n_modes: int = 8
    real: bool = False


@dataclass
class ScenarioConfig:
    name: str
    gamma1: complex = 2 * math.pi
    gamma2: complex = 2j * math.pi
    n1: int = 32
    n2: int = 32
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    dt: float = 1e-3
    dt_given: bool = False
    t_end: float = 0.1
    monitor_every: int = 10
    gauge_a: complex = 0.0
    gauge_b: complex = 0.0
    b_range: int = 1
    window: tuple | None = None
    resolution: int = 64
    cutoff: int = 8
    offset: complex = 0.0
    projection: tuple = ("drop4", None)
    basepoint: tuple = (0.0, 0.0, 0.0, 0.0)
    out_dir: str | None = None
    seed: int = 0
    strict: bool = False
    tolerances: dict = field(default_factory=dict)

    def tol(self, key: str) -> float:
        return self.tolerances.get(key, DEFAULT_TOLERANCES[key])


DEFAULT_TOLERANCES = {
    "willmore": 1e-8,       # relative drift / error of W
    "periods": 1e-6,        # drift of V and J
    "dirac": 1e-6,          # Dirac residuals of psi and phi
    "closure": 1e-10,       # closure integrals on closed data
    "potential": 1e-9,      # |U| checks
    "multiplier": 1e-10,    # |mu| - 1
}

# section -> key -> (attribute path, parser)
_SCHEMA = {
    "scenario": {"name": ("name", str.strip), "seed": ("seed", parse_int),
                 "strict": ("strict", parse_bool)},
    "lattice": {"gamma1": ("gamma1", parse_pair), "gamma2": ("gamma2", parse_pair),
                "n1": ("n1", parse_int), "n2": ("n2", parse_int), "n": ("n", parse_int)},
    "potential": {"kind": ("potential.kind", str.strip), "value": ("potential.value", parse_number),
                  "modes": ("potential.modes", parse_modes), "radius": ("potential.radius", parse_real),
                  "eps": ("potential.eps", parse_real), "amplitude": ("potential.amplitude", parse_real),
                  "max_mode": ("potential.max_mode", parse_int), "n_modes": ("potential.n_modes", parse_int),
                  "real": ("potential.real", parse_bool)},
    "flow": {"dt": ("dt", parse_real), "t_end": ("t_end", parse_real),
             "monitor_every": ("monitor_every", parse_int)},
    "gauge": {"a": ("gauge_a", parse_number), "b": ("gauge_b", parse_number),
              "b_range": ("b_range", parse_int)},
    "spectral": {"window": ("window", parse_reals(4)), "resolution": ("resolution", parse_int),
                 "cutoff": ("cutoff", parse_int), "offset": ("offset", parse_number)},
    "output": {"dir": ("out_dir", str.strip), "projection": ("projection", parse_projection),
               "basepoint": ("basepoint", parse_reals(4))},
    "tolerances": {k: ("tolerances." + k, parse_real) for k in DEFAULT_TOLERANCES},
}


def _option_lines(text: str) -> dict:
    """(section, key) -> line number, for error messages after configparser is done."""
    lines = {}
    section = None
    for n, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if not s or s[0] in "#;":
            continue
        if s.startswith("[") and s.endswith("]"):
            section = s[1:-1].strip().lower()
        elif "=" in s and section is not None:
            lines[(section, s.split("=", 1)[0].strip().lower())] = n
    return lines


def parse_config(text: str) -> ScenarioConfig:
    """Parse and validate scenario text; unknown sections and keys are rejected."""
    cp = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#", ";"),
                                   inline_comment_prefixes=("#",), interpolation=None,
                                   default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("key-value line outside any [section]", exc.lineno) from None
    except (configparser.DuplicateOptionError, configparser.DuplicateSectionError) as exc:
        raise ParseError(exc.message.split(":")[-1].strip() if hasattr(exc, "message") else str(exc),
                         exc.lineno) from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else 0
        raise ParseError("expected 'key = value'", lineno) from None
    lines = _option_lines(text)

    values = {}
    for section in cp.sections():
        sec = section.lower()
        if sec not in _SCHEMA:
            raise ValidationError(section, "unknown section")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[sec]:
                raise ValidationError(f"{sec}.{key}", "unknown key")
            attr, parser = _SCHEMA[sec][key]
            try:
                values[attr] = parser(raw)
            except (ValueError, UnsupportedProjection) as exc:
                raise ParseError(f"{sec}.{key}: {exc}", lines.get((sec, key), 0)) from None

    if "name" not in values:
        raise ValidationError("scenario.name", "missing")
    cfg = ScenarioConfig(name=values.pop("name"))
    if "n" in values:
        n = values.pop("n")
        values.setdefault("n1", n)
        values.setdefault("n2", n)
    cfg.dt_given = "dt" in values
    for attr, val in values.items():
        if attr.startswith("potential."):
            setattr(cfg.potential, attr.split(".", 1)[1], val)
        elif attr.startswith("tolerances."):
            cfg.tolerances[attr.split(".", 1)[1]] = val
        else:
            setattr(cfg, attr, val)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.name not in SCENARIOS:
        raise ValidationError("scenario.name", f"unknown scenario {cfg.name!r}")
    if cfg.potential.kind not in POTENTIAL_KINDS:
        raise ValidationError("potential.kind", f"unknown kind {cfg.potential.kind!r}")
    if cfg.potential.kind == "modes" and not cfg.potential.modes:
        raise ValidationError("potential.modes", "required for kind = modes")
    for name in ("n1", "n2"):
        n = getattr(cfg, name)
        if n < 8 or n % 2:
            raise ValidationError(f"lattice.{name}", "must be an even integer >= 8")
    if not cfg.dt > 0:
        raise ValidationError("flow.dt", "must be positive")
    if cfg.t_end < 0:
        raise ValidationError("flow.t_end", "must be >= 0")
    if cfg.monitor_every < 1:
        raise ValidationError("flow.monitor_every", "must be >= 1")
    if cfg.resolution < 4:
        raise ValidationError("spectral.resolution", "must be >= 4")
    if cfg.cutoff < 0:
        raise ValidationError("spectral.cutoff", "must be >= 0")
    if cfg.b_range < 0:
        raise ValidationError("gauge.b_range", "must be >= 0")
    if cfg.potential.radius <= 0:
        raise ValidationError("potential.radius", "must be positive")
    for key, val in cfg.tolerances.items():
        if not val > 0:
            raise ValidationError(f"tolerances.{key}", "must be positive")
    if cfg.projection[0] != "drop4" and np.linalg.norm(cfg.projection[1]) == 0:
        raise ValidationError("output.projection", "direction must be nonzero")
    return cfg


# ---------------------------------------------------------------------------
# serialization


def _fmt(x: float) -> str:
    return format(float(x), ".16e")


def _basis_orthogonal_to(u) -> np.ndarray:
    """3 x 4 orthonormal rows spanning the complement of u."""
    u = np.asarray(u, float)
    u = u / np.linalg.norm(u)
    q, _ = np.linalg.qr(np.column_stack([u, np.eye(4)]))
    B = q[:, 1:4].T
    return B


def project_points(X: np.ndarray, projection) -> np.ndarray:
    """(4, n) points in R^4 -> (3, n) points in R^3."""
    name, vec = projection if isinstance(projection, tuple) else parse_projection(projection)
    if name == "drop4":
        return X[:3]
    if name == "orth":
        return _basis_orthogonal_to(vec) @ X
    if name == "stereo":
        p = np.asarray(vec, float)
        p = p / np.linalg.norm(p)
        r = np.linalg.norm(X, axis=0)
        if np.any(r < 1e-14):
            raise UnsupportedProjection("stereographic projection needs points away from the origin")
        S = X / r
        denom = 1.0 - p @ S
        if np.any(denom < 1e-12):
            raise UnsupportedProjection("a normalized point coincides with the projection pole")
        return _basis_orthogonal_to(p) @ S / denom
    raise UnsupportedProjection(f"unknown projection {name!r}")


def export_mesh(x, projection=("drop4", None), comment: str | None = None) -> str:
    """OBJ text for an immersion sampled on its grid, with wrap-around quads.

    The full R^4 coordinates are kept in ``#v4`` comment lines.
    """
    coords = x.coordinates() if hasattr(x, "coordinates") else np.asarray(x, float)
    n1, n2 = coords.shape[1:]
    X = coords.reshape(4, -1)
    name, vec = projection if isinstance(projection, tuple) else parse_projection(projection)
    P = project_points(X, (name, vec))
    out = ["# torusflow mesh", f"# grid {n1} {n2}"]
    if name == "drop4":
        out.append("# projection drop4 (x1, x2, x3); discarded x4, kept in #v4 lines")
    else:
        out.append(f"# projection {name} {' '.join(_fmt(v) for v in vec)}; "
                   "R^4 coordinates kept in #v4 lines")
    if comment:
        out.extend("# " + line for line in comment.splitlines())
    for k in range(X.shape[1]):
        out.append("#v4 " + " ".join(_fmt(c) for c in X[:, k]))
    for k in range(P.shape[1]):
        out.append("v " + " ".join(_fmt(c) for c in P[:, k]))
    for i in range(n1):
        for j in range(n2):
            a = i * n2 + j + 1
            b = ((i + 1) % n1) * n2 + j + 1
            c = ((i + 1) % n1) * n2 + (j + 1) % n2 + 1
            d = i * n2 + (j + 1) % n2 + 1
            out.append(f"f {a} {b} {c} {d}")
    return "\n".join(out) + "\n"


def read_obj(text: str):
    """Return (vertices (n, 3), faces list, v4 (n, 4) or None)."""
    verts, faces, v4 = [], [], []
    for line in text.splitlines():
        if line.startswith("v "):
            verts.append([float(t) for t in line.split()[1:4]])
        elif line.startswith("f "):
            faces.append([int(t.split("/")[0]) for t in line.split()[1:]])
        elif line.startswith("#v4 "):
            v4.append([float(t) for t in line.split()[1:5]])
    return np.array(verts), faces, (np.array(v4) if v4 else None)


TRACE_HEADER = (["t", "willmore"]
                + [f"V{k}g{j}" for k in range(1, 5) for j in (1, 2)]
                + [f"{p}J{k}" for k in range(1, 5) for p in ("Re", "Im")]
                + ["dirac_psi", "dirac_phi", "closedness"])


def export_trace(records) -> str:
    lines = [",".join(TRACE_HEADER)]
    for r in records:
        row = [r.t, r.willmore, *np.asarray(r.periods, float).ravel()]
        for J in np.asarray(r.J, complex):
            row += [J.real, J.imag]
        row += [r.dirac_psi, r.dirac_phi, r.closedness]
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


SPECTRUM_HEADER = ["k1", "k2", "sigma_min", "Re_mu1", "Im_mu1", "Re_mu2", "Im_mu2"]


def export_spectrum(samples) -> str:
    lines = [",".join(SPECTRUM_HEADER)]
    for s in samples:
        lines.append(",".join(_fmt(v) for v in (s.k1, s.k2, s.sigma_min, s.mu1.real, s.mu1.imag,
                                                 s.mu2.real, s.mu2.imag)))
    return "\n".join(lines) + "\n"


def atomic_write(path: str, text: str) -> None:
    """Write to a temporary file in the target directory, then rename over ``path``."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def config_to_jsonable(cfg: ScenarioConfig) -> dict:
    def conv(v):
        if isinstance(v, complex):
            return [v.real, v.imag]
        if isinstance(v, dict):
            return {str(k): conv(x) for k, x in sorted(v.items(), key=lambda kv: str(kv[0]))}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        return v
    return conv(asdict(cfg))


# ---------------------------------------------------------------------------
# orchestration


class Check(NamedTuple):
    name: str
    value: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tolerance)


@dataclass
class RunResult:
    name: str
    checks: list = field(default_factory=list)
    texts: dict = field(default_factory=dict)      # file name -> content
    info: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(c.passed for c in self.checks)


def _grid(cfg: ScenarioConfig):
    from .torus_field import make_lattice
    return make_lattice(cfg.gamma1, cfg.gamma2, cfg.n1, cfg.n2)


def _require_square(cfg: ScenarioConfig, what: str) -> None:
    if abs(cfg.gamma1 - 2 * math.pi) > 1e-12 or abs(cfg.gamma2 - 2j * math.pi) > 1e-12:
        raise ValidationError("lattice", f"{what} needs gamma1 = 2 pi, gamma2 = 2 pi i")


def build_initial(cfg: ScenarioConfig, grid):
    """Return (WeierstrassData or None, potential)."""
    from . import fixtures
    from .torus_field import PeriodicField, random_band_limited
    sp = cfg.potential
    if sp.kind in ("clifford", "perturbed_clifford", "plane_wave"):
        _require_square(cfg, f"potential kind {sp.kind}")
        if sp.kind == "clifford":
            data = fixtures.clifford_data(grid, sp.radius)
        elif sp.kind == "plane_wave":
            data = fixtures.plane_wave_data(grid)
        else:
            cutoff = min(10, math.floor(min(grid.n1, grid.n2) / 3))
            data = fixtures.perturbed_clifford(grid, sp.eps, cutoff)
        return data, data.U
    if sp.kind == "constant":
        return None, PeriodicField.constant(grid, sp.value)
    if sp.kind == "modes":
        u = PeriodicField.from_modes(grid, sp.modes)
    else:
        u = random_band_limited(grid, np.random.default_rng(cfg.seed), sp.n_modes, sp.amplitude,
                                sp.max_mode, sp.real)
    if sp.real:
        u = PeriodicField(grid, u.values.real)
    return None, u


def surface_of(data, basepoint=(0.0, 0.0, 0.0, 0.0)):
    """Integrated immersion with x(node 0) = basepoint, or None if the forms are not closed."""
    from .errors import NotClosed
    from .weierstrass import Immersion, forms_from_spinors, integrate_surface
    try:
        x = integrate_surface(forms_from_spinors(data))
    except NotClosed:
        return None
    X = x.coordinates()
    x0 = x.x0 + np.asarray(basepoint, float) - X[:, 0, 0]
    return Immersion(x.grid, x.linear, x.periodic, x0)


def _versions() -> dict:
    import scipy
    from . import __version__
    return {"torusflow": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _run_clifford(cfg, grid, res: RunResult):
    from . import fixtures
    from .dirac import dirac_residual
    from .weierstrass import closure_report, weierstrass_data_from_immersion, willmore
    _require_square(cfg, "the clifford scenario")
    x = fixtures.product_torus(grid, cfg.potential.radius)
    data = weierstrass_data_from_immersion(x)
    absU = np.abs(data.U.values)
    W = willmore(data.U)
    rep = closure_report(data)
    res.checks += [
        Check("abs_U_constant", float(np.abs(absU - 1 / (2 * math.sqrt(2))).max()), cfg.tol("potential")),
        Check("willmore_vs_2pi2", abs(W - 2 * math.pi ** 2) / (2 * math.pi ** 2), cfg.tol("willmore")),
        Check("closure", rep.max_abs(), cfg.tol("closure")),
        Check("dirac_psi", dirac_residual(data.psi, data.U), cfg.tol("dirac")),
        Check("dirac_phi", dirac_residual(data.phi, data.U, vee=True), cfg.tol("dirac")),
    ]
    res.info.update(willmore=W, lam=[data.psi.lam.real, data.psi.lam.imag],
                    rho=[data.psi.rho.real, data.psi.rho.imag])
    surf = surface_of(data, cfg.basepoint)
    if surf is not None:
        res.texts["surface.obj"] = export_mesh(surf, cfg.projection, "scenario clifford")


def _run_constant(cfg, grid, res: RunResult):
    from .dirac import WeierstrassData, dirac_residual
    from .spectral_curve import floquet_nullspace, floquet_nullspace_exponents
    from .torus_field import PeriodicField
    from .weierstrass import closure_report, willmore
    c = complex(cfg.potential.value)
    U = PeriodicField.constant(grid, c)
    k = (2 * abs(c) / (2 * math.pi), 0.0)
    psi = floquet_nullspace(U, k, cfg.cutoff).spinor
    phi = floquet_nullspace_exponents(U, -psi.lam, -psi.rho, cfg.cutoff, vee=True).spinor
    data = WeierstrassData(psi, phi, U)
    W = willmore(U)
    rep = closure_report(data)
    res.checks += [
        Check("dirac_psi", dirac_residual(psi, U), cfg.tol("dirac")),
        Check("dirac_phi", dirac_residual(phi, U, vee=True), cfg.tol("dirac")),
        Check("willmore_formula", abs(W - 4 * grid.area * abs(c) ** 2) / max(W, 1e-300), cfg.tol("willmore")),
    ]
    res.info.update(willmore=W, k=list(k), closedness=rep.closedness,
                    periods=rep.periods.tolist())
    surf = surface_of(data, cfg.basepoint)
    if surf is not None:
        res.texts["surface.obj"] = export_mesh(surf, cfg.projection, "scenario constant_potential")


def _run_flow(cfg, grid, res: RunResult):
    from . import ds_flows
    from .errors import NumericalBlowup
    level = FLOW_LEVELS[cfg.name]
    data, u = build_initial(cfg, grid)
    state = ds_flows.FlowState.from_data(data) if data is not None else ds_flows.FlowState.from_potential(u)
    dt = cfg.dt if cfg.dt_given else ds_flows.DEFAULT_DT[level]
    records = []
    if data is not None:
        s0 = surface_of(data, cfg.basepoint)
        if s0 is not None:
            res.texts["initial.obj"] = export_mesh(s0, cfg.projection, f"scenario {cfg.name} t=0")
    final = state
    try:
        if cfg.t_end > 0:
            final, _ = ds_flows.evolve_to(state, cfg.t_end, dt, level, cfg.monitor_every,
                                          on_record=records.append)
            if not records or records[-1].t != final.t:
                records.append(ds_flows.monitor(final))
        else:
            records.append(ds_flows.monitor(state))
    except NumericalBlowup:
        res.texts["trace.csv"] = export_trace(records)
        raise
    res.texts["trace.csv"] = export_trace(records)
    r0, r1 = records[0], records[-1]
    res.checks.append(Check("willmore_drift", max(abs(r.willmore - r0.willmore) for r in records)
                            / max(r0.willmore, 1e-300), cfg.tol("willmore")))
    if data is not None:
        res.checks += [
            Check("period_drift", max(float(np.abs(r.periods - r0.periods).max()) for r in records),
                  cfg.tol("periods")),
            Check("J_drift", max(float(np.abs(r.J - r0.J).max()) for r in records), cfg.tol("periods")),
            Check("dirac_residual", max(max(r.dirac_psi, r.dirac_phi) for r in records), cfg.tol("dirac")),
        ]
        s1 = surface_of(final.data, cfg.basepoint)
        if s1 is not None:
            res.texts["final.obj"] = export_mesh(s1, cfg.projection, f"scenario {cfg.name} t={final.t:.16e}")
    res.info.update(level=str(level), dt=(cfg.t_end / max(1, math.ceil(cfg.t_end / dt - 1e-9)))
                    if cfg.t_end > 0 else dt, t_final=final.t, records=len(records))


def _run_spectral(cfg, grid, res: RunResult):
    from .spectral_curve import scan_zero_set
    U = build_initial(cfg, grid)[1]
    window = None if cfg.window is None else ((cfg.window[0], cfg.window[1]), (cfg.window[2], cfg.window[3]))
    samples = scan_zero_set(U, window, cfg.resolution, cfg.cutoff, offset=(cfg.offset, 0.0))
    res.texts["spectrum.csv"] = export_spectrum(samples)
    res.info.update(samples=len(samples))
    if cfg.offset == 0 and samples:
        dev = max(max(abs(abs(s.mu1) - 1), abs(abs(s.mu2) - 1)) for s in samples)
        res.checks.append(Check("multiplier_unimodular", dev, cfg.tol("multiplier")))


def _run_gauge_family(cfg, grid, res: RunResult):
    from . import fixtures
    from .dirac import decompose_gauss_map, gauge_transform, is_admissible, lift_to_dirac
    from .weierstrass import forms_from_spinors, weierstrass_data_from_immersion, willmore
    _require_square(cfg, "the gauge_family scenario")
    x = fixtures.product_torus(grid, cfg.potential.radius)
    G, _, _ = decompose_gauss_map(x)
    R = cfg.b_range
    rows = ["b1,b2,willmore,min_abs_U,max_abs_U"]
    base = None
    spread_U = spread_W = 0.0
    for b1 in range(-R, R + 1):
        for b2 in range(-R, R + 1):
            _, U = lift_to_dirac(G, (b1, b2))
            a = np.abs(U.values)
            W = willmore(U)
            if base is None:
                base = (a, W)
            spread_U = max(spread_U, float(np.abs(a - base[0]).max()))
            spread_W = max(spread_W, abs(W - base[1]) / base[1])
            rows.append(",".join([str(b1), str(b2), _fmt(W), _fmt(a.min()), _fmt(a.max())]))
    res.texts["family.csv"] = "\n".join(rows) + "\n"
    res.checks += [Check("abs_U_family_spread", spread_U, 1e-12),
                   Check("willmore_family_spread", spread_W, 1e-12)]
    if cfg.gauge_b != 0 or cfg.gauge_a != 0:
        if not is_admissible(grid, cfg.gauge_b):
            raise ValidationError("gauge.b", "not in the admissible lattice")
        data = weierstrass_data_from_immersion(x)
        g = gauge_transform(data, cfg.gauge_a, cfg.gauge_b)
        f0, f1 = forms_from_spinors(data), forms_from_spinors(g)
        dev = max(float(np.abs(p.values - q.values).max()) for p, q in zip(f0, f1))
        res.checks.append(Check("gauge_forms_invariant", dev, 1e-12))


_RUNNERS = {"clifford": _run_clifford, "constant_potential": _run_constant,
            "ds1_flow": _run_flow, "ds2_flow": _run_flow, "ds3_flow": _run_flow, "mnv_flow": _run_flow,
            "spectral_scan": _run_spectral, "gauge_family": _run_gauge_family}


def run_scenario(cfg: ScenarioConfig, out_dir: str | None = None) -> RunResult:
    """Run one scenario; files are written (atomically) only when an output directory is set."""
    import time
    import warnings
    from .errors import EmptyZeroSet, StiffnessWarning, TorusFlowError
    validate(cfg)
    res = RunResult(cfg.name)
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        if cfg.strict:
            warnings.simplefilter("error", StiffnessWarning)
            warnings.simplefilter("error", EmptyZeroSet)
        grid = _grid(cfg)
        try:
            _RUNNERS[cfg.name](cfg, grid, res)
        except TorusFlowError as exc:
            exc.args = (f"scenario {cfg.name}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            _write(res, cfg, out_dir, failed=True)
            raise
    res.timings["total_seconds"] = time.perf_counter() - t0
    _write(res, cfg, out_dir)
    return res


def _write(res: RunResult, cfg: ScenarioConfig, out_dir: str | None, failed: bool = False) -> None:
    target = out_dir or cfg.out_dir
    meta = {
        "scenario": cfg.name,
        "config": config_to_jsonable(cfg),
        "versions": _versions(),
        "tolerances": {k: cfg.tol(k) for k in DEFAULT_TOLERANCES},
        "checks": [{"name": c.name, "value": c.value, "tolerance": c.tolerance, "passed": c.passed}
                   for c in res.checks],
        "info": res.info,
        "status": "failed" if failed else ("ok" if res.ok else "check_failed"),
    }
    res.texts["metadata.json"] = json.dumps(meta, indent=2, sort_keys=True) + "\n"
    if target is None:
        return
    for name, text in sorted(res.texts.items()):
        path = os.path.join(target, name)
        atomic_write(path, text)
        res.paths[name] = path
    path = os.path.join(target, "timings.json")
    atomic_write(path, json.dumps(res.timings, indent=2, sort_keys=True) + "\n")
    res.paths["timings.json"] = path
