"""Scenario configuration: TOML parsing, validation and hashing.

A scenario file declares geometry, material, randomization, the macro mesh,
the tiling of the reference model, boundary conditions, time stepping and
outputs.  The same file drives both the homogenized and the fully resolved
pipeline, which keeps paired verification runs consistent by construction.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass, field as dc_field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class GeometryConfig:
    kind: str = "voronoi"            # voronoi | skewed | file
    cell: tuple = (0.15, 0.15)
    l_min: float = 0.01
    seed: int = 1
    rejection_budget: int = 10_000
    divisions: tuple = (4, 4)        # skewed lattice only
    skew_angle_deg: float = 0.0
    path: str = ""                   # lattice file import


@dataclass
class MaterialConfig:
    kind: str = "linear"             # linear | van_genuchten | htc
    params: dict = dc_field(default_factory=dict)


@dataclass
class RandomConfig:
    cov: float = 0.0
    seed: int = 0


@dataclass
class MeshConfig:
    x_coords: np.ndarray = None
    y_coords: np.ndarray = None
    thickness: float = 1.0


@dataclass
class BcConfig:
    set: str                         # wall/node-set name
    field: str                       # p | H | T
    times: tuple
    values: tuple


@dataclass
class TimeConfig:
    mode: str = "transient"          # steady | transient
    stages: tuple = ()               # ((dt, n), ...)

    def grid(self):
        times = [0.0]
        for dt, n in self.stages:
            times.extend(times[-1] + dt * np.arange(1, n + 1))
        return np.asarray(times, dtype=float)


@dataclass
class OutputConfig:
    directory: str = "out"
    flux_sets: tuple = ()
    profiles: tuple = ()             # dicts: name, start, end, samples, steps
    vtk_steps: tuple = ()
    points: tuple = ()               # dicts: label, position
    plots: bool = True


@dataclass
class ScenarioConfig:
    geometry: GeometryConfig
    material: MaterialConfig
    random: RandomConfig
    mesh: MeshConfig
    tiling: tuple
    bcs: tuple
    time: TimeConfig
    outputs: OutputConfig
    initial: dict
    text: str = ""                   # original TOML for hashing

    @property
    def hash(self):
        return hashlib.sha256(self.text.encode()).hexdigest()[:12]


def _coords_from(section, axis):
    """Nodal coordinates along one axis, from coords, widths or count."""
    coords = section.get(f"{axis}_coords")
    if coords is not None:
        return np.asarray(coords, dtype=float)
    widths = section.get(f"{axis}_widths")
    if widths is not None:
        return np.concatenate([[0.0], np.cumsum(widths)])
    n = section.get(f"n{axis}")
    length = section.get(f"{axis}_length")
    if n is None or length is None:
        raise ConfigError(f"macro_mesh needs {axis}_coords, {axis}_widths or "
                          f"n{axis} + {axis}_length")
    return np.linspace(0.0, float(length), int(n) + 1)


def parse_config(text):
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"invalid TOML: {err}") from err

    geo_raw = raw.get("geometry", {})
    geometry = GeometryConfig(
        kind=geo_raw.get("kind", "voronoi"),
        cell=tuple(geo_raw.get("cell", (0.15, 0.15))),
        l_min=float(geo_raw.get("l_min", 0.01)),
        seed=int(geo_raw.get("seed", 1)),
        rejection_budget=int(geo_raw.get("rejection_budget", 10_000)),
        divisions=tuple(geo_raw.get("divisions", (4, 4))),
        skew_angle_deg=float(geo_raw.get("skew_angle_deg", 0.0)),
        path=geo_raw.get("path", ""))
    if geometry.kind not in ("voronoi", "skewed", "file"):
        raise ConfigError(f"unknown geometry.kind {geometry.kind!r}")

    mat_raw = dict(raw.get("material", {}))
    kind = mat_raw.pop("kind", "linear")
    if kind not in ("linear", "van_genuchten", "htc"):
        raise ConfigError(f"unknown material.kind {kind!r}")
    material = MaterialConfig(kind=kind, params=mat_raw)

    rnd_raw = raw.get("random", {}).get("lambda0", {})
    random = RandomConfig(cov=float(rnd_raw.get("cov", 0.0)),
                          seed=int(rnd_raw.get("seed", 0)))

    mesh = MeshConfig()
    if "macro_mesh" in raw:
        sec = raw["macro_mesh"]
        mesh = MeshConfig(x_coords=_coords_from(sec, "x"),
                          y_coords=_coords_from(sec, "y"),
                          thickness=float(sec.get("thickness", 1.0)))

    tiling = tuple(raw.get("tiling", {}).get("reps", ()))

    bcs = []
    for b in raw.get("bcs", ()):
        try:
            bcs.append(BcConfig(set=b["set"], field=b["field"],
                                times=tuple(b["times"]), values=tuple(b["values"])))
        except KeyError as err:
            raise ConfigError(f"bcs entries need set/field/times/values: missing {err}")
        if len(bcs[-1].times) != len(bcs[-1].values):
            raise ConfigError("bcs times and values must have equal length")

    time_raw = raw.get("time", {})
    stages = [(float(s["dt"]), int(s["n"])) for s in time_raw.get("stages", ())]
    if not stages and "dt" in time_raw:
        stages = [(float(time_raw["dt"]), int(time_raw.get("n_steps", 1)))]
    time_cfg = TimeConfig(mode=time_raw.get("mode", "transient"),
                          stages=tuple(stages))
    if time_cfg.mode not in ("steady", "transient"):
        raise ConfigError(f"unknown time.mode {time_cfg.mode!r}")
    if not time_cfg.stages:
        raise ConfigError("time section needs dt/n_steps or stages")

    out_raw = raw.get("outputs", {})
    outputs = OutputConfig(
        directory=out_raw.get("dir", "out"),
        flux_sets=tuple(out_raw.get("flux_sets", ())),
        profiles=tuple(out_raw.get("profiles", ())),
        vtk_steps=tuple(out_raw.get("vtk_steps", ())),
        points=tuple(out_raw.get("points", ())),
        plots=bool(out_raw.get("plots", True)))

    return ScenarioConfig(geometry=geometry, material=material, random=random,
                          mesh=mesh, tiling=tiling, bcs=tuple(bcs),
                          time=time_cfg, outputs=outputs,
                          initial=dict(raw.get("initial", {})), text=text)


def load_config(path):
    with open(path, "r") as fh:
        return parse_config(fh.read())
