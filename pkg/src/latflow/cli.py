"""Command line: scenario runner and reproduction harness.

Subcommands
    generate-rve   build a periodic cell, validate it and write a lattice file
    rve-tensor     compute the effective conductivity tensor of a cell
    rve-study      tensor statistics over sizes x structures x random variants
    run-macro      homogenized finite-element run of a scenario
    run-full       fully resolved lattice run of the same scenario
    verify         paired full/homogenized verification suites

All report CSVs carry a reproducibility header (config hash, seeds, version)
and are rendered to companion PNG figures unless --no-plots is given.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, geometry, reports, rve, verify
from .config import ConfigError, load_config
from .pipeline import build_cell, run_scenario, rve_study


def _add_common(parser, config_required=True):
    parser.add_argument("--config", required=config_required,
                        help="scenario configuration (TOML)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the geometry seed")
    parser.add_argument("--out-dir", default="out", help="output directory")
    parser.add_argument("--threads", type=int, default=1,
                        help="concurrent ensemble members")
    parser.add_argument("--deterministic", action="store_true",
                        help="force single-threaded, fixed-order execution")
    parser.add_argument("--no-plots", action="store_true",
                        help="write CSV/VTK only, skip the PNG figures")


def _load(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.geometry.seed = args.seed
    return cfg


def cmd_generate_rve(args):
    cfg = _load(args)
    cell = build_cell(cfg)
    report = geometry.validate_network(cell)
    os.makedirs(args.out_dir, exist_ok=True)
    path = args.out or os.path.join(args.out_dir, "rve.lat")
    geometry.export_network(cell, path)
    print(f"wrote {path}: {cell.n_nodes} nodes, {cell.n_elements} elements")
    print("invariant checks (max deviations):")
    for key, value in report.items():
        print(f"  {key}: {value:.3e}")
    return 0


def cmd_rve_tensor(args):
    cfg = _load(args)
    cell = build_cell(cfg)
    tensor = rve.effective_tensor(cell, cell.lambda0)
    os.makedirs(args.out_dir, exist_ok=True)
    names = "xyz"[:cell.n_dim]
    columns = {"axis": np.arange(cell.n_dim)}
    for j, nm in enumerate(names):
        columns[f"lambda_{nm}"] = tensor.Lambda[:, j]
    for j, nm in enumerate(names):
        columns[f"unit_flux_{nm}"] = tensor.unit_f[:, j]
    meta = {"config_hash": cfg.hash, "geometry_seed": cfg.geometry.seed,
            "random_seed": cfg.random.seed}
    reports.write_csv(os.path.join(args.out_dir, "rve_tensor.csv"), columns, meta)
    print("effective conductivity tensor [s]:")
    print(np.array2string(tensor.Lambda, precision=6))
    if args.dump_fields:
        geometry.export_network(cell, os.path.join(args.out_dir, "rve_network.lat"))
        fields = {f"p1_{nm}": tensor.unit_p1[:, j] for j, nm in enumerate(names)}
        cells = {f"j0_{nm}": tensor.unit_j0[:, j] for j, nm in enumerate(names)}
        cells["lambda0"] = cell.lambda0
        reports.write_vtk_network(os.path.join(args.out_dir, "rve_fields.vtk"),
                                  cell, fields, cells)
        print(f"field dumps written to {args.out_dir}")
    return 0


def cmd_rve_study(args):
    cfg_raw = _study_params(args.config)
    threads = 1 if args.deterministic else max(1, args.threads)
    rows = rve_study(threads=threads, **cfg_raw)
    os.makedirs(args.out_dir, exist_ok=True)
    reports.write_rve_study(os.path.join(args.out_dir, "rve_study.csv"), rows,
                            {"seed": cfg_raw["seed"]}, plot=not args.no_plots)
    for row in rows:
        print(f"size {row['size_m']:g} m: diag {row['diag_mean']:.4f} "
              f"+/- {row['diag_std']:.4f}, |offdiag| {row['offdiag_mean']:.4f}")
    return 0


def _study_params(path):
    if sys.version_info >= (3, 11):
        import tomllib
    else:
        import tomli as tomllib
    with open(path, "rb") as fh:
        raw = tomllib.load(fh).get("study", {})
    return {"sizes": list(raw.get("sizes", (0.075, 0.15, 0.3))),
            "l_min": float(raw.get("l_min", 0.01)),
            "structures": int(raw.get("structures", 10)),
            "variants": int(raw.get("variants", 10)),
            "cov": float(raw.get("cov", 0.2)),
            "mean_lambda0": float(raw.get("mean_lambda0", 5.618e-12)),
            "seed": int(raw.get("seed", 1))}


def _cmd_run(args, which):
    cfg = _load(args)
    result = run_scenario(cfg, which)
    out_dir = os.path.join(args.out_dir, which)
    reports.write_run_outputs(result, cfg, out_dir, plot=not args.no_plots)
    print(f"{which} run: {result.n_dof} dofs, {len(result.times) - 1} steps, "
          f"{result.elapsed:.2f} s, outputs in {out_dir}")
    for name, values in result.flux.items():
        print(f"  final flux {name}: {values[-1] * reports.G_PER_DAY:.4g} g/day")
    return 0


def cmd_verify(args):
    failures = 0
    suites = verify.SUITES if args.suite == "all" else (args.suite,)
    for suite in suites:
        criteria, artifacts = verify.run_suite(suite)
        print(f"[suite {suite}]")
        for crit in criteria:
            print("  " + crit.line())
            failures += 0 if crit.passed else 1
        if args.out_dir and args.write_outputs:
            cfg = verify.bundled_config(_SUITE_CONFIG[suite])
            for label in ("full", "hom"):
                if label in artifacts:
                    reports.write_run_outputs(
                        artifacts[label], cfg,
                        os.path.join(args.out_dir, suite, label),
                        plot=not args.no_plots)
    print("verification " + ("PASSED" if failures == 0 else f"FAILED ({failures})"))
    return 0 if failures == 0 else 1


_SUITE_CONFIG = {"linear": "linear_prism.toml", "nonlinear": "nonlinear_prism.toml",
                 "transient": "transient_prism.toml", "htc": "htc_dam.toml"}


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="latflow",
        description="multiscale diffusion on discrete lattices")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-rve", help="build and export a periodic cell")
    _add_common(p)
    p.add_argument("--out", default=None, help="lattice file path")
    p.set_defaults(func=cmd_generate_rve)

    p = sub.add_parser("rve-tensor", help="effective conductivity of a cell")
    _add_common(p)
    p.add_argument("--dump-fields", action="store_true",
                   help="also write the lattice file and a VTK field dump")
    p.set_defaults(func=cmd_rve_tensor)

    p = sub.add_parser("rve-study", help="tensor statistics over an ensemble")
    _add_common(p)
    p.set_defaults(func=cmd_rve_study)

    p = sub.add_parser("run-macro", help="homogenized finite-element run")
    _add_common(p)
    p.set_defaults(func=lambda a: _cmd_run(a, "macro"))

    p = sub.add_parser("run-full", help="fully resolved lattice run")
    _add_common(p)
    p.set_defaults(func=lambda a: _cmd_run(a, "full"))

    p = sub.add_parser("verify", help="paired verification suites")
    p.add_argument("suite", choices=list(verify.SUITES) + ["all"])
    _add_common(p, config_required=False)
    p.add_argument("--write-outputs", action="store_true",
                   help="also write the runs' CSV/VTK/PNG reports")
    p.set_defaults(func=cmd_verify)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, geometry.GeometryError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
