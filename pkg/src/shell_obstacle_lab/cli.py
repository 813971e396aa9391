"""Command-line entry point: ``shell-obstacle-lab <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from .elasticity import LameParameters
from .geometry import ImmersionError
from .harness import (
    DEFAULT_KAPPAS,
    _dims,
    _floats,
    emit_field_dump,
    load_config,
    parse_chart,
    run_eps_sweep,
    run_geometry_check,
    run_kappa_sweep,
)
from .penalty import ConvergenceError, InfeasibleError, ObstacleSpec, PenaltyConfig
from .shell2d import LoadSpec2D, Mesh2D, solve_limit
from .shell3d import LoadSpec3D, Mesh3D, solve_scaled


def _add_problem_args(p, mesh_help):
    p.add_argument("--chart", default="plane", help="plane | cylinder | sphere, optionally name:key=value;... (default: plane)")
    p.add_argument("--mesh", required=True, help=mesh_help)
    p.add_argument("--lame", default="1,1", help="lambda,mu (default: 1,1)")
    p.add_argument("--load", default="0,0,-1", help="contravariant load components fx,fy,fz (default: 0,0,-1)")
    p.add_argument("--q", default=None, help="obstacle direction qx,qy,qz; omit for no obstacle")
    p.add_argument("--offset", default="0,0,0", help="translation of the chart, sets the slack theta.q (default: 0,0,0)")
    p.add_argument("--out", default=None, help="field dump path")


def _summary(pairs):
    for k, v in pairs:
        print(f"{k}={v!r}" if isinstance(v, float) else f"{k}={v}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shell-obstacle-lab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("geometry-check", help="measure remainders of the small-thickness expansions")
    g.add_argument("--chart", default="cylinder")
    g.add_argument("--eps", default="0.1,0.01,0.001", help="comma-separated thickness values")
    g.add_argument("--samples", type=int, default=100)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", default=None, help="CSV path (default: stdout)")

    s2 = sub.add_parser("solve2d", help="solve the penalised flexural limit problem")
    _add_problem_args(s2, "NxM elements")
    s2.add_argument("--kappa", type=float, default=1e-6)
    s2.add_argument("--space", choices=("bilinear", "hermite"), default="bilinear", help="tangential element space")

    s3 = sub.add_parser("solve3d", help="solve the scaled penalised 3D problem")
    _add_problem_args(s3, "NxMxK cells (K layers through the thickness)")
    s3.add_argument("--eps", type=float, required=True)
    s3.add_argument("--kappa", type=float, default=None, help="penalty parameter (default: sqrt(eps))")
    s3.add_argument("--shear", choices=("full", "ans"), default="full", help="transverse shear treatment")

    se = sub.add_parser("sweep-eps", help="eps sweep with kappa from the config rule")
    se.add_argument("config", help="key=value config file")
    se.add_argument("--shear", choices=("full", "ans"), default="full")
    se.add_argument("--out-dir", default=None, help="override out_dir from the config")

    sk = sub.add_parser("sweep-kappa", help="penalty consistency sweep against the exact QP solution")
    sk.add_argument("config", help="key=value config file")
    sk.add_argument("--kappas", default=",".join(repr(k) for k in DEFAULT_KAPPAS))
    sk.add_argument("--out-dir", default=None)
    return parser


def _cmd_geometry(args):
    rows = run_geometry_check(args.chart, _floats(args.eps), samples=args.samples, seed=args.seed, out_path=args.out)
    if args.out is None:
        print("quantity,eps,sup_remainder,fitted_slope")
        for r in rows:
            print(f"{r.quantity},{r.eps!r},{r.sup_remainder!r},{r.fitted_slope!r}")


def _problem(args):
    chart = parse_chart(args.chart, tuple(_floats(args.offset, 3)))
    lam, mu = _floats(args.lame, 2)
    obstacle = ObstacleSpec(tuple(_floats(args.q, 3))) if args.q else None
    return chart, LameParameters(lam, mu), tuple(_floats(args.load, 3)), obstacle


def _cmd_solve2d(args):
    chart, lame, load, obstacle = _problem(args)
    n1, n2 = _dims(args.mesh, 2)
    mesh = Mesh2D.for_chart(chart, n1, n2)
    sol = solve_limit(mesh, chart, lame, LoadSpec2D(load), obstacle, PenaltyConfig(kappa=args.kappa), space=args.space)
    out = Path(args.out or "solution2d.txt")
    emit_field_dump(sol.field, out)
    _summary(
        [
            ("field", str(out)),
            ("flexural_energy", sol.flexural_energy),
            ("membrane_energy", sol.membrane_energy),
            ("violation_norm", sol.report.violation_norm),
            ("min_slack", sol.min_slack),
            ("iterations", sol.report.iterations),
            ("oracle_gap", sol.oracle_error if sol.oracle_error is not None else float("nan")),
        ]
    )


def _cmd_solve3d(args):
    chart, lame, load, obstacle = _problem(args)
    n1, n2, n3 = _dims(args.mesh, 3)
    mesh = Mesh3D(Mesh2D.for_chart(chart, n1, n2), n3)
    kappa = args.kappa if args.kappa is not None else math.sqrt(args.eps)
    sol = solve_scaled(mesh, chart, lame, LoadSpec3D(load), obstacle, args.eps, PenaltyConfig(kappa=kappa), shear=args.shear)
    out = Path(args.out or "solution3d.txt")
    emit_field_dump(sol.field, out)
    d = sol.diagnostics
    _summary(
        [
            ("field", str(out)),
            ("eps", float(args.eps)),
            ("kappa", float(kappa)),
            ("energy", sol.energy),
            ("violation_norm", sol.violation_norm),
            ("violation_over_kappa", sol.violation_norm / kappa),
            ("iterations", sol.report.iterations),
            ("shear_diagnostic", d.transverse_shear),
            ("normal_diagnostic", d.transverse_normal),
        ]
    )


def _cmd_sweep_eps(args):
    cfg = load_config(args.config)
    res = run_eps_sweep(cfg, out_dir=args.out_dir, shear=args.shear)
    print(res.csv_path)


def _cmd_sweep_kappa(args):
    cfg = load_config(args.config)
    _, path = run_kappa_sweep(cfg, kappas=_floats(args.kappas), out_dir=args.out_dir)
    print(path)


_COMMANDS = {
    "geometry-check": _cmd_geometry,
    "solve2d": _cmd_solve2d,
    "solve3d": _cmd_solve3d,
    "sweep-eps": _cmd_sweep_eps,
    "sweep-kappa": _cmd_sweep_kappa,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _COMMANDS[args.command](args)
    except (ValueError, OSError, ImmersionError, InfeasibleError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
