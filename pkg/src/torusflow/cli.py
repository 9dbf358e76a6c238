"""Command line entry point: ``torusflow {lift,flow,spectrum,scenario}``."""
from __future__ import annotations

import argparse
import sys

from .errors import TorusFlowError
from .scenarios_io import (SCENARIOS, PotentialSpec, ScenarioConfig, parse_config, parse_modes,
                           parse_number, parse_projection, run_scenario, validate)

FLOW_NAMES = {"1": "ds1_flow", "2": "ds2_flow", "3": "ds3_flow", "mnv": "mnv_flow"}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out-dir", default=None, help="directory for meshes, traces and metadata")
    p.add_argument("--seed", type=int, default=None, help="seed for random initial data")
    p.add_argument("--strict", action="store_true", help="treat stiffness and empty-scan warnings as errors")
    p.add_argument("-n", "--grid", type=int, default=32, help="grid points per direction (default 32)")


def _potential_args(p: argparse.ArgumentParser, default: str) -> None:
    p.add_argument("--potential", default=default,
                   choices=["clifford", "perturbed_clifford", "plane_wave", "constant", "modes", "random"])
    p.add_argument("--value", type=parse_number, default=0.5, help="constant potential value")
    p.add_argument("--modes", type=parse_modes, default=None, help="mode list, e.g. '(1,0):0.1+0.05i'")
    p.add_argument("--amplitude", type=float, default=0.1)
    p.add_argument("--eps", type=float, default=0.1, help="size of the perturbation of the Clifford data")
    p.add_argument("--real", action="store_true", help="keep only the real part of the potential")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="torusflow", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lift", help="lift the product torus to Dirac data and export its mesh")
    _common(p)
    p.add_argument("--radius", type=float, default=1.0)
    p.add_argument("--projection", type=parse_projection, default=("drop4", None))

    p = sub.add_parser("flow", help="run a DSII flow and write the invariant trace")
    _common(p)
    p.add_argument("--level", choices=sorted(FLOW_NAMES), default="2")
    _potential_args(p, "clifford")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--t-end", type=float, default=0.1)
    p.add_argument("--monitor-every", type=int, default=10)
    p.add_argument("--projection", type=parse_projection, default=("drop4", None))

    p = sub.add_parser("spectrum", help="scan the zero set of the dispersion relation")
    _common(p)
    _potential_args(p, "constant")
    p.add_argument("--resolution", type=int, default=64)
    p.add_argument("--cutoff", type=int, default=8)
    p.add_argument("--window", type=float, nargs=4, metavar=("K1MIN", "K1MAX", "K2MIN", "K2MAX"))

    p = sub.add_parser("scenario", help="run or list configured scenarios")
    ssub = p.add_subparsers(dest="action", required=True)
    r = ssub.add_parser("run", help="run a scenario file")
    r.add_argument("file")
    _common(r)
    ssub.add_parser("list", help="list scenario names")
    return parser


def _potential(args) -> PotentialSpec:
    spec = PotentialSpec(kind=args.potential, value=args.value, amplitude=args.amplitude,
                         eps=args.eps, real=args.real)
    if args.modes is not None:
        spec.modes = args.modes
    return spec


def config_from_args(args) -> ScenarioConfig:
    if args.command == "scenario":
        with open(args.file, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        if args.grid != 32:
            cfg.n1 = cfg.n2 = args.grid
    elif args.command == "lift":
        cfg = ScenarioConfig("clifford", potential=PotentialSpec(radius=args.radius),
                             projection=args.projection)
    elif args.command == "flow":
        cfg = ScenarioConfig(FLOW_NAMES[args.level], potential=_potential(args), t_end=args.t_end,
                             monitor_every=args.monitor_every, projection=args.projection)
        if args.dt is not None:
            cfg.dt, cfg.dt_given = args.dt, True
    else:
        window = tuple(args.window) if args.window else None
        cfg = ScenarioConfig("spectral_scan", potential=_potential(args), resolution=args.resolution,
                             cutoff=args.cutoff, window=window)
    if args.command != "scenario":
        cfg.n1 = cfg.n2 = args.grid
    if args.seed is not None:
        cfg.seed = args.seed
    cfg.strict = cfg.strict or args.strict
    return validate(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "scenario" and args.action == "list":
        for name, desc in SCENARIOS.items():
            print(f"{name:20s} {desc}")
        return 0
    try:
        cfg = config_from_args(args)
        result = run_scenario(cfg, args.out_dir)
    except (TorusFlowError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Warning as w:
        print(f"error (strict): {w}", file=sys.stderr)
        return 2
    for c in result.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status} {c.name}: {c.value:.3e} (tolerance {c.tolerance:.1e})")
    for name in sorted(result.paths):
        print(f"wrote {result.paths[name]}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
