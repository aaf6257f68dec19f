"""Command line entry point: ``jamstress {mesh gen, run, preset}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import geometry
from .pipeline import PRESETS, ConfigError, RunConfig, build_mesh_from_spec, run_pipeline


def _mesh_gen(args) -> int:
    spec = {"kind": args.kind, "domain": tuple(args.domain)}
    if args.kind == "grid":
        spec.update(nx=args.nx, ny=args.ny)
    elif args.kind == "brick":
        spec.update(rows=args.rows, cols=args.cols)
    else:
        spec.update(n_seeds=args.n_seeds, seed=args.seed)
    mesh = build_mesh_from_spec(spec)
    Path(args.output).write_text(geometry.dump_mesh(mesh))
    print(f"wrote {mesh.n_cells} cells, {len(mesh.edges)} edges to {args.output}")
    return 0


def _run(config: RunConfig) -> int:
    result = run_pipeline(config)
    rep = result.report
    print(f"{config.name}: {rep.get('stability')}  (LP {rep['lp']['status']}, "
          f"{rep['lp']['iterations']} iterations, objective {rep['lp']['primal_objective']:.3e})")
    audits = rep.get("audits")
    if audits:
        for key, value in audits["values"].items():
            mark = "ok  " if audits["passed"][key] else "FAIL"
            print(f"  {mark} {key:<26} {value:.3e}")
    if config.output_dir is not None:
        print(f"outputs in {config.base_dir / config.output_dir}")
    return result.exit_code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="jamstress", description="Interface forces and stresses in jammed packings.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh utilities")
    mesh_sub = mesh.add_subparsers(dest="mesh_command", required=True)
    gen = mesh_sub.add_parser("gen", help="generate a .jmsh mesh")
    gen.add_argument("--kind", choices=("voronoi", "grid", "brick"), required=True)
    gen.add_argument("--nx", type=int, default=4)
    gen.add_argument("--ny", type=int, default=4)
    gen.add_argument("--rows", type=int, default=8)
    gen.add_argument("--cols", type=int, default=4)
    gen.add_argument("--n-seeds", type=int, default=60)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--domain", type=float, nargs=4, default=(0.0, 0.0, 1.0, 1.0), metavar=("X0", "Y0", "X1", "Y1"))
    gen.add_argument("-o", "--output", required=True)

    run = sub.add_parser("run", help="run a TOML configuration")
    run.add_argument("-c", "--config", required=True)
    run.add_argument("-o", "--output", help="override the output directory")

    preset = sub.add_parser("preset", help="run a named preset")
    preset.add_argument("name", choices=PRESETS)
    preset.add_argument("-o", "--output", required=True)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    np.set_printoptions(precision=6)
    try:
        if args.command == "mesh":
            return _mesh_gen(args)
        if args.command == "run":
            config = RunConfig.from_toml(args.config)
            if args.output:
                config.output_dir = Path(args.output).resolve()
            return _run(config)
        config = RunConfig.preset(args.name)
        config.output_dir = Path(args.output).resolve()
        return _run(config)
    except (ConfigError, geometry.MeshError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
