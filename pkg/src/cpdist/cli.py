"""Command-line interface.

Subcommands: ``flatten`` (disk layout of one mesh), ``distance`` (one pair),
``matrix`` (all pairs of a collection), ``export-corr`` (per-sample residual
file from a saved result). Exit codes: 0 success, 2 input or topology error,
3 numerical failure. The CPDIST_LOG_LEVEL environment variable controls the
log level.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import InputError, NumericalError
from .flatten import flatten_to_disk
from .mesh import load_mesh, normalize_area
from .pipeline import (
    RunConfig,
    continuous_procrustes,
    distance_matrix,
    load_correspondence_json,
    save_correspondence_json,
    save_matrix_csv,
    save_residuals_csv,
)

log = logging.getLogger("cpdist")

_MESH_SUFFIXES = (".off", ".obj", ".ply")


def _add_config_flags(p):
    p.add_argument("--config", help="JSON config file mirroring RunConfig")
    p.add_argument("--L", type=int, help="surface sample count")
    p.add_argument("--K", type=int, help="rotation angles per extremum pair")
    p.add_argument("--max-extrema", type=int, dest="max_extrema")
    p.add_argument("--h", type=float, help="FE disk mesh edge length")
    p.add_argument("--n-steps", type=int, dest="n_steps")
    p.add_argument("--eps-floor", type=float, dest="eps_floor")
    p.add_argument("--chi-profile", choices=("atanh", "atan"), dest="chi_profile")
    p.add_argument(
        "--stages", help="comma-separated subset of mobius,tps,moser"
    )
    p.add_argument("--symmetrize", action="store_true", default=None)
    p.add_argument("--no-symmetrize", dest="symmetrize", action="store_false")
    p.add_argument("--refine-theta", dest="refine_theta", action="store_true",
                   default=None)
    p.add_argument("--seed-vertex", type=int, dest="seed_vertex")


def _build_config(args):
    if args.config:
        cfg = RunConfig.from_json(Path(args.config).read_text())
    else:
        cfg = RunConfig()
    overrides = {}
    for name in ("L", "K", "max_extrema", "h", "n_steps", "eps_floor",
                 "chi_profile", "symmetrize", "refine_theta", "seed_vertex"):
        val = getattr(args, name, None)
        if val is not None:
            overrides[name] = val
    if getattr(args, "stages", None):
        overrides["stages"] = tuple(s.strip() for s in args.stages.split(","))
    return cfg.replace(**overrides) if overrides else cfg


def _cmd_flatten(args):
    mesh = normalize_area(load_mesh(args.mesh))
    param = flatten_to_disk(mesh)
    Path(args.output).write_text(param.to_json())
    print(f"flattened {args.mesh}: {mesh.n_vertices} vertices -> {args.output}")
    return 0


def _cmd_distance(args):
    cfg = _build_config(args)
    mesh_a = load_mesh(args.mesh_a)
    mesh_b = load_mesh(args.mesh_b)
    corr = continuous_procrustes(mesh_a, mesh_b, cfg)
    if args.output:
        save_correspondence_json(corr, args.output)
    print(f"{corr.dpc_value:.6f}")
    return 0


def _collect_meshes(inputs):
    paths = []
    for item in inputs:
        p = Path(item)
        if p.is_dir():
            for suffix in _MESH_SUFFIXES:
                paths.extend(sorted(p.glob(f"*{suffix}")))
        else:
            paths.append(p)
    if len(paths) < 2:
        raise InputError("need at least two mesh files")
    return paths


def _cmd_matrix(args):
    cfg = _build_config(args)
    paths = _collect_meshes(args.inputs)
    meshes = [load_mesh(p) for p in paths]
    names = [p.stem for p in paths]
    D, summaries = distance_matrix(meshes, cfg, names=names, jobs=args.jobs)
    save_matrix_csv(D, names, args.output)
    n_failed = int(np.isnan(D).sum() // 2)
    if n_failed:
        log.warning("%d pairs failed (NaN entries)", n_failed)
    print(f"wrote {D.shape[0]}x{D.shape[0]} matrix to {args.output}")
    return 0


def _cmd_export_corr(args):
    corr = load_correspondence_json(args.result)
    save_residuals_csv(corr, args.output)
    print(f"wrote {len(corr.sample_indices)} residuals to {args.output}")
    return 0


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cpdist",
        description="Surface distances via area-preserving correspondences "
        "between disk-type meshes",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("flatten", help="flatten one mesh onto the unit disk")
    p.add_argument("mesh")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_flatten)

    p = sub.add_parser("distance", help="distance between two meshes")
    p.add_argument("mesh_a")
    p.add_argument("mesh_b")
    p.add_argument("-o", "--output", help="write the full result as JSON")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_distance)

    p = sub.add_parser("matrix", help="all-pairs distance matrix")
    p.add_argument("inputs", nargs="+", help="mesh files or a directory")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--jobs", type=int, default=None)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_matrix)

    p = sub.add_parser(
        "export-corr", help="per-sample residual file from a saved result"
    )
    p.add_argument("result")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=_cmd_export_corr)
    return ap


def main(argv=None):
    level = os.environ.get("CPDIST_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        log.error("%s", exc)
        return 2
    except NumericalError as exc:
        log.error("%s", exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
