"""Scenario pipelines: geometry -> material -> cell tensor -> paired runs.

The same scenario configuration drives two solution paths:

* ``macro``  -- homogenized: the periodic cell is solved once for its
  effective conductivity tensor, which then feeds the macroscale
  finite-element solver.
* ``full``   -- reference: the cell is tiled into the complete domain and
  the lattice balance is integrated directly.

Both paths share the material realization (per-element randomization is
copied tile-wise), the boundary-condition schedule, the time grid and the
reporting conventions, so their outputs are directly comparable.
"""

from __future__ import annotations

import copy
import time as _time
from dataclasses import dataclass, field

import numpy as np

from . import constitutive as mat
from . import fullmodel, geometry, macro, rve
from .config import ConfigError
from .numerics import NewtonOptions, run_transient, solve_steady

HTC_FIELDS = ("H", "T")


def build_cell(cfg):
    """Periodic cell network with its per-element coefficients assigned."""
    geo = cfg.geometry
    if geo.kind == "voronoi":
        nuclei = geometry.generate_periodic_nuclei(
            geo.cell, geo.l_min, geo.seed, rejection_budget=geo.rejection_budget)
        net = geometry.build_voronoi_dual(nuclei, geo.cell)
    elif geo.kind == "skewed":
        net = geometry.build_skewed_lattice(geo.cell, geo.divisions, geo.skew_angle_deg)
    elif geo.kind == "file":
        net = geometry.import_network(geo.path)
        if not net.periodic:
            raise ConfigError("imported cell network must be periodic")
    else:
        raise ConfigError(f"unknown geometry kind {geo.kind!r}")

    base = material_lambda0(cfg)
    if cfg.random.cov > 0.0:
        net = mat.randomize_lambda0(net, base, cfg.random.cov, cfg.random.seed)
    else:
        net = net.with_lambda0(np.full(net.n_elements, base))
    return net


def material_lambda0(cfg):
    """Mean intrinsic element coefficient of the configured material."""
    p = cfg.material.params
    if cfg.material.kind == "linear":
        if "lambda0" in p:
            return float(p["lambda0"])
        return float(p["rho_w"]) * float(p["kappa0"]) / float(p["mu"])
    if cfg.material.kind == "van_genuchten":
        return build_permeability(cfg).lambda0
    return float(p.get("lambda0", 1.0))     # htc: relative coefficient


def build_permeability(cfg):
    p = cfg.material.params
    if cfg.material.kind == "linear":
        return mat.LinearPermeability(lambda0=material_lambda0(cfg))
    if cfg.material.kind == "van_genuchten":
        keys = ("m", "alpha", "mu", "kappa0", "rho_w")
        return mat.VanGenuchtenPermeability(**{k: float(p[k]) for k in keys if k in p})
    raise ConfigError("htc scenarios have no scalar permeability model")


def build_capacity_source(cfg):
    p = cfg.material.params
    return mat.CapacitySource(c=float(p.get("capacity", 0.0)),
                              q=float(p.get("source", 0.0)))


def build_htc_params(cfg):
    p = dict(cfg.material.params)
    p.pop("lambda0", None)
    known = {f.name for f in mat.HtcParams.__dataclass_fields__.values()}
    unknown = set(p) - known
    if unknown:
        raise ConfigError(f"unknown HTC parameters: {sorted(unknown)}")
    return mat.HtcParams(**{k: float(v) for k, v in p.items()})


@dataclass
class RunResult:
    """Recorded output of one pipeline run."""

    which: str
    times: np.ndarray
    flux: dict                    # column name -> kg/s (or W), aligned with times
    profiles: dict                # name -> {"arc", "times", <field>: rows}
    points: dict                  # label -> {"time", <field>, "alpha_c"}
    states: dict                  # step index -> state vector copy
    n_dof: int = 0
    elapsed: float = 0.0
    newton_iterations: int = 0
    system: object = None
    mesh: object = None
    network: object = None
    tensor: object = None
    extras: dict = field(default_factory=dict)

    @property
    def flux_times(self):
        """Instants the flux rows belong to (the grid without t=0)."""
        return self.times[1:]

    def field_values(self, u, name):
        """Nodal values of one named field from a packed state vector."""
        if name == "p":
            return u
        n = u.size // 2
        return u[:n] if name == "H" else u[n:]


def _initial_state(cfg, n_nodes, htc):
    ini = cfg.initial
    if htc:
        u0 = np.empty(2 * n_nodes)
        u0[:n_nodes] = float(ini.get("H", 1.0))
        u0[n_nodes:] = float(ini.get("T", 293.15))
        return u0
    return np.full(n_nodes, float(ini.get("p", 0.0)))


def _resolve_bcs(cfg, node_sets):
    bcs = []
    for b in cfg.bcs:
        if b.set not in node_sets:
            raise ConfigError(f"unknown boundary set {b.set!r}; have {sorted(node_sets)}")
        bcs.append(macro.DirichletBC(nodes=node_sets[b.set], field=b.field,
                                     times=np.asarray(b.times), values=np.asarray(b.values)))
    return bcs


# wall names of the tiled lattice map onto the macro mesh's side names
_WALL_TO_SIDE = {"-x": "left", "+x": "right", "-y": "bottom", "+y": "top"}
_SIDE_TO_WALL = {v: k for k, v in _WALL_TO_SIDE.items()}


def run_scenario(cfg, which, newton=None, cell=None):
    """Run one scenario along the requested path and record its outputs."""
    if which not in ("macro", "full"):
        raise ConfigError("which must be 'macro' or 'full'")
    htc = cfg.material.kind == "htc"
    newton = newton or NewtonOptions()
    t_wall = _time.perf_counter()

    cell = cell if cell is not None else build_cell(cfg)
    fields = HTC_FIELDS if htc else ("p",)

    if which == "macro":
        if cfg.mesh.x_coords is None:
            raise ConfigError("macro runs need a [macro_mesh] section")
        mesh = macro.MacroMesh.from_coords(cfg.mesh.x_coords, cfg.mesh.y_coords,
                                           cfg.mesh.thickness)
        node_sets = mesh.node_sets
        bcs = _resolve_bcs(cfg, node_sets)
        tensor = rve.effective_tensor(cell, cell.lambda0)
        if htc:
            system = macro.HtcMacroSystem(mesh, tensor.Lambda, build_htc_params(cfg), bcs)
        else:
            response = macro.TensorResponse(tensor, build_permeability(cfg))
            system = macro.PressureSystem(mesh, response, build_capacity_source(cfg), bcs)
        n_nodes = mesh.n_nodes
        network = None
    else:
        if not cfg.tiling:
            raise ConfigError("full runs need a [tiling] section")
        network = geometry.tile_full_domain(cell, cfg.tiling)
        node_sets = {_WALL_TO_SIDE.get(w, w): ids
                     for w, ids in geometry.boundary_node_sets(network).items()}
        bcs = _resolve_bcs(cfg, node_sets)
        if htc:
            problem = fullmodel.FullProblem(network=network, bcs=bcs,
                                            htc_params=build_htc_params(cfg))
            system = fullmodel.LatticeHtcSystem(problem)
        else:
            problem = fullmodel.FullProblem(
                network=network, bcs=bcs, permeability=build_permeability(cfg),
                capacity_source=build_capacity_source(cfg))
            system = fullmodel.LatticePressureSystem(problem)
        mesh = None
        tensor = None
        n_nodes = network.n_nodes

    u0 = _initial_state(cfg, n_nodes, htc)
    times = cfg.time.grid()
    flux_sets = {name: node_sets[name] for name in cfg.outputs.flux_sets}

    result = RunResult(which=which, times=times, flux={}, profiles={}, points={},
                       states={}, n_dof=system.n_dof, system=system, mesh=mesh,
                       network=network, tensor=tensor)
    n_steps = len(times) - 1
    for col in _flux_columns(flux_sets, fields):
        result.flux[col] = np.full(n_steps, np.nan)
    for spec in cfg.outputs.profiles:
        result.profiles[spec["name"]] = {"times": [], "spec": spec}
    for spec in cfg.outputs.points:
        hist = {"time": np.asarray(times[1:])}
        for f in fields:
            hist[f] = np.full(n_steps, np.nan)
        if htc:
            hist["alpha_c"] = np.full(n_steps, np.nan)
        result.points[spec["label"]] = hist

    boundary_heat = np.zeros(n_steps)      # W through all Dirichlet T dofs
    iterations = np.zeros(n_steps, dtype=int)

    def record(step, t, res):
        k = step - 1
        result.newton_iterations += res.iterations
        iterations[k] = res.iterations
        for name, ids in flux_sets.items():
            for f in fields:
                off = 0 if f in ("p", "H") else n_nodes
                result.flux[_col(name, f)][k] = res.reactions[off + ids].sum()
        if htc:
            idx, _ = system.dirichlet(t)
            boundary_heat[k] = res.reactions[idx[idx >= n_nodes]].sum()
        for spec in cfg.outputs.profiles:
            steps = spec.get("steps", (n_steps,))
            if step in steps:
                _record_profile(result, spec, res.u, t, which, mesh, network, fields)
        for spec in cfg.outputs.points:
            hist = result.points[spec["label"]]
            pos = np.asarray(spec["position"], dtype=float)
            for f in fields:
                vals = result.field_values(res.u, f)
                if which == "macro":
                    hist[f][k] = mesh.evaluate(vals, pos[None, :])[0]
                else:
                    hist[f][k] = fullmodel.interpolate_at(network, vals, pos[None, :])[0]
            if htc:
                if which == "macro":
                    hist["alpha_c"][k] = system.alpha_at(pos[None, :])[0]
                else:
                    hist["alpha_c"][k] = fullmodel.interpolate_at(
                        network, system.state.alpha_c, pos[None, :])[0]
        if step in cfg.outputs.vtk_steps or step == n_steps:
            result.states[step] = res.u.copy()

    if cfg.time.mode == "steady":
        u = u0
        for k in range(1, len(times)):
            res = solve_steady(system, u, times[k], newton)
            u = res.u
            if hasattr(system, "commit"):
                system.commit(u, times[k], None)
            record(k, times[k], res)
    else:
        run_transient(system, u0, times, newton,
                      observer=lambda k, t, res: record(k, t, res))

    result.extras["boundary_heat"] = boundary_heat
    result.extras["iterations_per_step"] = iterations
    if htc:
        result.extras["heat_source_integral"] = system.cum_heat_source
    result.elapsed = _time.perf_counter() - t_wall
    return result


def _col(set_name, field):
    return set_name if field == "p" else f"{set_name}.{field}"


def _flux_columns(flux_sets, fields):
    return [_col(name, f) for name in flux_sets for f in fields]


def _record_profile(result, spec, u, t, which, mesh, network, fields):
    entry = result.profiles[spec["name"]]
    start = np.asarray(spec["start"], dtype=float)
    end = np.asarray(spec["end"], dtype=float)
    samples = int(spec.get("samples", 101))
    if "arc" not in entry:
        entry["arc"] = np.linspace(0.0, np.linalg.norm(end - start), samples)
        for f in fields:
            entry[f] = []
    entry["times"].append(t)
    frac = np.linspace(0.0, 1.0, samples)
    pts = start[None, :] + frac[:, None] * (end - start)[None, :]
    for f in fields:
        vals = result.field_values(u, f)
        if which == "macro":
            entry[f].append(mesh.evaluate(vals, pts))
        else:
            entry[f].append(fullmodel.interpolate_at(network, vals, pts))


# ---------------------------------------------------------------------------
# effective-tensor ensembles
# ---------------------------------------------------------------------------

def study_member(args):
    """One (size, structure, variant) ensemble member; returns tensor entries.

    Module-level so process pools can dispatch members; every member derives
    its own seeds, which keeps the ensemble deterministic regardless of
    scheduling.
    """
    size, size_idx, struct, variant, l_min, cov, mean_lambda0, seed = args
    seed_geo = int(np.random.SeedSequence((seed, size_idx, struct)).generate_state(1)[0])
    nuclei = geometry.generate_periodic_nuclei((size, size), l_min, seed_geo)
    net = geometry.build_voronoi_dual(nuclei, (size, size))
    seed_mat = int(np.random.SeedSequence(
        (seed, size_idx, struct, variant, 1)).generate_state(1)[0])
    if cov > 0.0:
        net = mat.randomize_lambda0(net, mean_lambda0, cov, seed_mat)
    else:
        net = net.with_lambda0(np.full(net.n_elements, mean_lambda0))
    lam = rve.effective_tensor(net, net.lambda0).Lambda / mean_lambda0
    return size, np.diag(lam), lam[np.triu_indices_from(lam, k=1)]


def rve_study(sizes, l_min, structures, variants, cov, mean_lambda0, seed,
              threads=1):
    """Normalized tensor statistics over sizes x structures x random variants."""
    members = [(size, i, s, v, l_min, cov, mean_lambda0, seed)
               for i, size in enumerate(sizes)
               for s in range(structures) for v in range(variants)]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(study_member, members))
    else:
        outcomes = [study_member(m) for m in members]

    rows = []
    for size in sizes:
        diags = np.concatenate([d for s, d, o in outcomes if s == size])
        offs = np.concatenate([o for s, d, o in outcomes if s == size])
        rows.append({"size_m": size, "members": structures * variants,
                     "diag_mean": diags.mean(), "diag_std": diags.std(ddof=1),
                     "offdiag_mean": np.abs(offs).mean(),
                     "offdiag_std": np.abs(offs).std(ddof=1)})
    return rows


def steady_reference(cfg, which, newton=None, cell=None):
    """Final-load steady solution of a transient scenario (same BCs at t_end)."""
    steady_cfg = copy.deepcopy(cfg)
    steady_cfg.time.mode = "steady"
    t_end = cfg.time.grid()[-1]
    steady_cfg.time.stages = ((t_end, 1),)
    return run_scenario(steady_cfg, which, newton=newton, cell=cell)
