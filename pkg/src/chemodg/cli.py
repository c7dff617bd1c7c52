"""Command line entry point: ``chemodg {run,presets,validate,mesh-info}``.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from .celldensity import validate_params
from .config import RunConfig, parse_config, serialize_config
from .errors import ChemoError, ConfigError
from .mesh import Mesh, load_mesh, quality_report
from .output import DiagnosticsWriter, SnapshotWriter, ensure_writable_dir
from .params import PARAM_NAMES, ModelParams
from .presets import PRESETS
from .simulation import SolverOptions, run, save_checkpoint

logger = logging.getLogger("chemodg")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(f"{self.prog}: error: {message}")


def _add_config_args(p, *, with_output=True):
    p.add_argument("--config", "-c", metavar="FILE", help="INI config file")
    p.add_argument("--preset", help="start from a named preset")
    g = p.add_argument_group("model parameters (override preset and file)")
    for name in PARAM_NAMES:
        g.add_argument(f"--{name.replace('_', '-')}", dest=f"model.{name}", metavar="VALUE")
    m = p.add_argument_group("mesh")
    m.add_argument("--mesh", dest="mesh.path", metavar="FILE", help="mesh file (sets source=file)")
    m.add_argument("--mesh-format", dest="mesh.format", choices=["gmsh-msh-v2", "native-text"])
    m.add_argument("--mesh-source", dest="mesh.source", choices=["preset", "disk", "ball", "file"])
    m.add_argument("--target-h", dest="mesh.target_h", metavar="H")
    m.add_argument("--radius", dest="mesh.radius", metavar="R")
    s = p.add_argument_group("solver")
    for f in fields(SolverOptions):
        s.add_argument(f"--{f.name.replace('_', '-')}", dest=f"solver.{f.name}", metavar="VALUE")
    if with_output:
        o = p.add_argument_group("output")
        o.add_argument("--output", "-o", dest="output.directory", metavar="DIR")
        o.add_argument("--every", dest="output.every", metavar="K")
        o.add_argument("--vtu", dest="output.vtu", metavar="BOOL")
        o.add_argument("--checkpoint", dest="output.checkpoint", metavar="BOOL")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chemodg", description="Positivity-preserving upwind DG solver for "
                     "chemotaxis models with nonlinear diffusion, logistic and gradient damping.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p_run = sub.add_parser("run", help="run a simulation")
    _add_config_args(p_run)
    p_run.add_argument("--steps", type=int, help="number of steps (default T/dt)")
    sub.add_parser("presets", help="list presets")
    p_val = sub.add_parser("validate", help="check the parameter conditions")
    _add_config_args(p_val, with_output=False)
    p_val.add_argument("--dim", type=int, choices=[2, 3], help="spatial dimension (default from mesh)")
    p_mesh = sub.add_parser("mesh-info", help="print a mesh quality report")
    _add_config_args(p_mesh, with_output=False)
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {}
    for key, value in vars(args).items():
        if "." in key and value is not None:
            overrides[key] = value
    if args.preset is not None:
        overrides["model.preset"] = args.preset
    if "mesh.path" in overrides and "mesh.source" not in overrides:
        overrides["mesh.source"] = "file"
    return parse_config(args.config, overrides)


def build_run_mesh(cfg: RunConfig) -> Mesh:
    if cfg.mesh_source == "file":
        return load_mesh(cfg.mesh_path, cfg.mesh_format)
    return cfg.mesh_spec().build()


def execute(cfg: RunConfig, n_steps=None, out=sys.stdout):
    """Run ``cfg``, writing diagnostics.csv, VTU snapshots, config.ini and a final checkpoint."""
    outdir = ensure_writable_dir(cfg.output_dir)
    mesh = build_run_mesh(cfg)
    init = cfg.initial_data()
    (outdir / "config.ini").write_text(serialize_config(cfg))
    hooks = []
    snaps = None
    if cfg.write_vtu:
        snaps = SnapshotWriter(outdir, cfg.every)
        hooks.append(snaps)
    with DiagnosticsWriter(outdir / "diagnostics.csv") as diag:
        hooks.append(diag)
        state, rows = run(cfg.params, mesh, init.u0, init.v0, init.w0, hooks=hooks,
                          options=cfg.options, n_steps=n_steps)
    if snaps is not None and state.m % cfg.every != 0:
        snaps.every = 1
        snaps(state, rows[-1])
    if cfg.write_checkpoint:
        save_checkpoint(state, outdir / "checkpoint.npz")
    last = rows[-1]
    print(f"{state.m} steps, t={state.t:.6g}, mass={last.mass:.10g}, min u={last.min_u:.3e}, "
          f"max u={last.max_u:.6g}, fallbacks={sum(r.fallback_used for r in rows)}", file=out)
    return state, rows


def _cmd_run(args, out):
    cfg = config_from_args(args)
    execute(cfg, args.steps, out)
    return 0


def _cmd_presets(args, out):
    for name, p in PRESETS.items():
        tag = " [long]" if p.long_running else ""
        print(f"{name}: {p.description}; {p.mesh.kind} h={p.mesh.target_h:g}, "
              f"dt={p.params.dt:g}, T={p.params.T:g}{tag}", file=out)
    return 0


def _cmd_validate(args, out):
    cfg = config_from_args(args)
    dim = args.dim
    mesh = None
    if dim is None:
        dim = cfg.dim
    if dim is None:
        mesh = build_run_mesh(cfg)
        dim = mesh.dim
    reports = validate_params(cfg.params, dim)
    for r in reports:
        status = "ok  " if r.satisfied else "FAIL"
        print(f"{status} {r.name:<14} margin={r.margin:.6g}  {r.detail}", file=out)
    return 0


def _cmd_mesh_info(args, out):
    cfg = config_from_args(args)
    mesh = build_run_mesh(cfg)
    q = quality_report(mesh)
    print(f"dim={mesh.dim} vertices={mesh.num_vertices} elements={mesh.num_elements} "
          f"interior_facets={len(mesh.interior_facets)} boundary_facets={len(mesh.boundary_facets)}",
          file=out)
    print(f"volume={mesh.volume:.10g} h={q.h:.6g} max_angle_deg={q.max_angle * 180 / 3.141592653589793:.4f} "
          f"non_obtuse={q.is_non_obtuse} shape_ratio={q.shape_regularity_ratio:.6g}", file=out)
    return 0


_COMMANDS = {"run": _cmd_run, "presets": _cmd_presets, "validate": _cmd_validate,
             "mesh-info": _cmd_mesh_info}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"chemodg: config error: {exc}", file=sys.stderr)
        return 2
    except (ChemoError, OSError, ValueError) as exc:
        print(f"chemodg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
