"""Report writers: delimited output, VTK dumps and companion figures.

Every CSV starts with ``#``-prefixed reproducibility comments (config hash,
seeds, package version) and is rendered to a PNG of the same stem unless
plotting is disabled.  Unit conversions (g/day at the mass-flux reporting
boundary, degrees Celsius for temperatures) happen here and only here; the
solvers work in SI throughout.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from . import __version__

G_PER_DAY = 86400.0 * 1000.0      # kg/s -> g/day
KELVIN = 273.15


def _header_lines(meta):
    lines = [f"# latflow {__version__}"]
    for key, value in (meta or {}).items():
        lines.append(f"# {key}={value}")
    return lines


def write_csv(path, columns, meta=None):
    """Write named columns with a reproducibility header."""
    names = list(columns)
    rows = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write("\n".join(_header_lines(meta)) + "\n")
        fh.write(",".join(names) + "\n")
        for row in rows:
            fh.write(",".join(format(v, ".12g") for v in row) + "\n")


def read_csv(path):
    """Read back a report CSV; returns (columns dict, meta dict)."""
    meta = {}
    with open(path) as fh:
        lines = fh.readlines()
    body = []
    for ln in lines:
        if ln.startswith("#"):
            if "=" in ln:
                key, _, val = ln[1:].strip().partition("=")
                meta[key.strip()] = val.strip()
        elif ln.strip():
            body.append(ln.strip())
    names = body[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in body[1:]])
    return {c: data[:, i] for i, c in enumerate(names)}, meta


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def write_flux_history(path, times, flux, meta=None, plot=True):
    """Flux history per boundary set: time [s] columns in g/day."""
    columns = {"time_s": times}
    for name, values in flux.items():
        columns[f"{name}_g_per_day"] = np.asarray(values) * G_PER_DAY
    write_csv(path, columns, meta)
    if plot:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for name, values in flux.items():
            ax.plot(times / 86400.0, np.abs(np.asarray(values)) * G_PER_DAY, label=name)
        ax.set_xlabel("time [days]")
        ax.set_ylabel("boundary flux [g/day]")
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
        _save(fig, os.path.splitext(path)[0] + ".png")


def write_profile(path, name, entry, fields, meta=None, plot=True):
    """Line profile at the recorded instants, one column per (field, time)."""
    columns = {"arc_m": entry["arc"]}
    for f in fields:
        for t, vals in zip(entry["times"], entry[f]):
            columns[f"{f}_t{t:g}"] = vals
    write_csv(path, columns, meta)
    if plot:
        fig, ax = plt.subplots(figsize=(6.0, 3.6))
        for f in fields:
            for t, vals in zip(entry["times"], entry[f]):
                ax.plot(entry["arc"], vals, label=f"{f} @ {t / 86400.0:.3g} d")
        ax.set_xlabel("arc length [m]")
        ax.set_ylabel(" / ".join(fields))
        ax.set_title(name, fontsize=9)
        ax.legend(fontsize=7)
        ax.grid(alpha=0.3)
        _save(fig, os.path.splitext(path)[0] + ".png")


def write_point_history(path, label, hist, meta=None, plot=True):
    """Field history at a probe point; temperatures reported in Celsius."""
    columns = {"time_s": hist["time"]}
    for key in hist:
        if key == "time":
            continue
        vals = np.asarray(hist[key])
        if key == "T":
            columns["T_degC"] = vals - KELVIN
        else:
            columns[key] = vals
    write_csv(path, columns, meta)
    if plot:
        keys = [k for k in hist if k != "time"]
        fig, axes = plt.subplots(len(keys), 1, figsize=(6.0, 2.2 * len(keys)),
                                 sharex=True)
        axes = np.atleast_1d(axes)
        days = hist["time"] / 86400.0
        for ax, key in zip(axes, keys):
            vals = np.asarray(hist[key])
            ax.plot(days, vals - KELVIN if key == "T" else vals)
            ax.set_ylabel(f"{key} [degC]" if key == "T" else key)
            ax.grid(alpha=0.3)
        axes[-1].set_xlabel("time [days]")
        fig.suptitle(label, fontsize=9)
        _save(fig, os.path.splitext(path)[0] + ".png")


def write_rve_study(path, rows, meta=None, plot=True):
    """Tensor statistics over sizes: normalized diagonal/off-diagonal moments."""
    columns = {key: np.array([r[key] for r in rows]) for key in rows[0]}
    write_csv(path, columns, meta)
    if plot:
        fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
        size = columns["size_m"]
        axes[0].errorbar(size, columns["diag_mean"], yerr=columns["diag_std"],
                         marker="o", capsize=3)
        axes[0].set_ylabel("diagonal / lambda0")
        axes[1].errorbar(size, columns["offdiag_mean"], yerr=columns["offdiag_std"],
                         marker="s", capsize=3, color="tab:red")
        axes[1].set_ylabel("off-diagonal / lambda0")
        for ax in axes:
            ax.set_xlabel("cell size [m]")
            ax.grid(alpha=0.3)
        _save(fig, os.path.splitext(path)[0] + ".png")


# ---------------------------------------------------------------------------
# VTK legacy ASCII writers
# ---------------------------------------------------------------------------

def write_vtk_quads(path, mesh, point_fields):
    """Unstructured quad mesh with nodal fields (legacy ASCII)."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    n, ne = mesh.n_nodes, mesh.n_elements
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\nlatflow macro fields\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for xy in mesh.nodes:
            fh.write(f"{xy[0]:.12g} {xy[1]:.12g} 0\n")
        fh.write(f"CELLS {ne} {5 * ne}\n")
        for quad in mesh.quads:
            fh.write("4 " + " ".join(str(int(v)) for v in quad) + "\n")
        fh.write(f"CELL_TYPES {ne}\n")
        fh.write("\n".join(["9"] * ne) + "\n")
        fh.write(f"POINT_DATA {n}\n")
        for name, values in point_fields.items():
            fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
            fh.write("\n".join(format(float(v), ".12g") for v in values) + "\n")


def write_vtk_network(path, network, point_fields=None, cell_fields=None):
    """Conduit network as VTK line cells with nodal and element data."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    n, ne = network.n_nodes, network.n_elements
    pos = network.positions
    if network.n_dim == 2:
        pos = np.column_stack([pos, np.zeros(n)])
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 2.0\nlatflow lattice\nASCII\n")
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {n} double\n")
        for xyz in pos:
            fh.write(f"{xyz[0]:.12g} {xyz[1]:.12g} {xyz[2]:.12g}\n")
        fh.write(f"CELLS {ne} {3 * ne}\n")
        for pq in zip(network.node_p, network.node_q):
            fh.write(f"2 {int(pq[0])} {int(pq[1])}\n")
        fh.write(f"CELL_TYPES {ne}\n")
        fh.write("\n".join(["3"] * ne) + "\n")
        if point_fields:
            fh.write(f"POINT_DATA {n}\n")
            for name, values in point_fields.items():
                fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                fh.write("\n".join(format(float(v), ".12g") for v in values) + "\n")
        if cell_fields:
            fh.write(f"CELL_DATA {ne}\n")
            for name, values in cell_fields.items():
                fh.write(f"SCALARS {name} double\nLOOKUP_TABLE default\n")
                fh.write("\n".join(format(float(v), ".12g") for v in values) + "\n")


def write_run_outputs(result, cfg, out_dir, meta=None, plot=None):
    """Write all configured reports of one pipeline run into ``out_dir``."""
    plot = cfg.outputs.plots if plot is None else plot
    meta = dict(meta or {})
    meta.setdefault("config_hash", cfg.hash)
    meta.setdefault("geometry_seed", cfg.geometry.seed)
    meta.setdefault("random_seed", cfg.random.seed)
    meta.setdefault("path", result.which)
    os.makedirs(out_dir, exist_ok=True)
    htc = cfg.material.kind == "htc"
    fields = ("H", "T") if htc else ("p",)

    if result.flux:
        write_flux_history(os.path.join(out_dir, "flux_history.csv"),
                           result.flux_times, result.flux, meta, plot)
    for name, entry in result.profiles.items():
        if entry["times"]:
            write_profile(os.path.join(out_dir, f"profile_{name}.csv"),
                          name, entry, fields, meta, plot)
    for label, hist in result.points.items():
        write_point_history(os.path.join(out_dir, f"htc_point_{label}.csv")
                            if htc else os.path.join(out_dir, f"point_{label}.csv"),
                            label, hist, meta, plot)
    for step, u in result.states.items():
        fields_out = {f: result.field_values(u, f) for f in fields}
        vtk_path = os.path.join(out_dir, f"fields_{step}.vtk")
        if result.which == "macro":
            write_vtk_quads(vtk_path, result.mesh, fields_out)
        else:
            write_vtk_network(vtk_path, result.network, fields_out,
                              {"lambda0": result.network.lambda0})
