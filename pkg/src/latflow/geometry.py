"""Periodic discrete dual networks: generation, tiling, validation and I/O.

A dual network carries the transport problem: lattice nodes hold the pressure
degrees of freedom and a control volume W, conduit elements connect node
pairs across shared tessellation facets and carry the facet area S, the
projected area S* = |o.e| S, the length h and the unit direction e.

Periodic networks wrap through ``image_shift``: an element whose second node
lives in a neighboring period stores the integer lattice offset of that
image.  Each physical contact appears exactly once; per-node loops therefore
visit every element from both of its ends (a self-contact of a small periodic
cell is visited twice by the same node, once per facet orientation).

Two-dimensional networks carry a fixed 1 m out-of-plane thickness, so facet
areas are in m^2 and control volumes in m^3 regardless of dimension.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import Voronoi

from .numerics import RandomStream

THICKNESS_2D = 1.0          # m, virtual out-of-plane thickness of 2D networks
AXES = "xyz"


class GeometryError(ValueError):
    """Invalid or degenerate network geometry."""


class InvariantViolation(GeometryError):
    """A constructed or imported network violates a structural invariant."""


@dataclass(frozen=True)
class LatticeNode:
    id: int
    position: np.ndarray
    volume: float               # control volume W [m^3]


@dataclass(frozen=True)
class ConduitElement:
    id: int
    node_p: int
    node_q: int
    length: float               # h [m]
    direction: np.ndarray       # unit vector e from P towards (wrapped) Q
    normal: np.ndarray          # unit facet normal o
    area: float                 # facet area S [m^2]
    area_star: float            # projected area S* = |o.e| S [m^2]
    centroid: np.ndarray
    image_shift: np.ndarray     # integer period offset of node Q
    lambda0: float              # element permeability coefficient [s]


@dataclass
class DualNetwork:
    """Node/element arrays of one periodic cell or a tiled full domain."""

    n_dim: int
    cell: np.ndarray            # period (or bounding box) lengths per axis [m]
    periodic: bool
    positions: np.ndarray       # (n_nodes, n_dim)
    volumes: np.ndarray         # (n_nodes,) control volumes W [m^3]
    node_p: np.ndarray          # (n_elem,) int
    node_q: np.ndarray
    length: np.ndarray          # (n_elem,) h [m]
    direction: np.ndarray       # (n_elem, n_dim) unit e
    normal: np.ndarray          # (n_elem, n_dim) unit o
    area: np.ndarray            # (n_elem,) S [m^2]
    area_star: np.ndarray       # (n_elem,) S* [m^2]
    centroid: np.ndarray        # (n_elem, n_dim)
    image_shift: np.ndarray     # (n_elem, n_dim) int
    lambda0: np.ndarray         # (n_elem,) [s]
    boundary: dict = field(default_factory=dict)   # wall name -> node ids

    @property
    def n_nodes(self):
        return self.positions.shape[0]

    @property
    def n_elements(self):
        return self.node_p.shape[0]

    @property
    def cell_volume(self):
        """Cell volume V0 [m^3]; 2D cells carry the 1 m virtual thickness."""
        v = float(np.prod(self.cell))
        return v * THICKNESS_2D if self.n_dim == 2 else v

    def node(self, i):
        return LatticeNode(i, self.positions[i], float(self.volumes[i]))

    def element(self, k):
        return ConduitElement(
            k, int(self.node_p[k]), int(self.node_q[k]), float(self.length[k]),
            self.direction[k], self.normal[k], float(self.area[k]),
            float(self.area_star[k]), self.centroid[k], self.image_shift[k],
            float(self.lambda0[k]))

    def with_lambda0(self, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n_elements,):
            raise ValueError("lambda0 array must have one entry per element")
        return replace(self, lambda0=values)


def periodic_delta(delta, cell):
    """Minimum-image displacement on the torus defined by ``cell``."""
    return delta - np.round(delta / cell) * cell


# ---------------------------------------------------------------------------
# nucleus placement
# ---------------------------------------------------------------------------

def generate_periodic_nuclei(cell, l_min, seed, rejection_budget=10_000,
                             allow_single=False):
    """Sequential random placement of nuclei with periodic minimum distance.

    Candidates are drawn uniformly over the cell and rejected whenever their
    periodic distance to any accepted nucleus falls below ``l_min``.
    Placement saturates after ``rejection_budget`` consecutive rejections.
    Deterministic for a fixed seed.

    Raises ``GeometryError("degenerate cell...")`` when fewer than two nuclei
    fit, unless ``allow_single`` accepts a one-nucleus set.
    """
    cell = np.asarray(cell, dtype=float)
    n_dim = cell.size
    if n_dim not in (2, 3):
        raise GeometryError("only 2D and 3D cells are supported")
    if l_min <= 0.0 or np.any(cell <= 0.0):
        raise GeometryError("cell lengths and l_min must be positive")

    stream = RandomStream(seed)
    block = 1024
    accepted = np.empty((0, n_dim))
    misses = 0
    lmin2 = l_min * l_min
    while misses < rejection_budget:
        cand = stream.uniform(size=(block, n_dim)) * cell
        if len(accepted):
            d = periodic_delta(cand[:, None, :] - accepted[None, :, :], cell)
            clear = np.einsum("ijk,ijk->ij", d, d).min(axis=1) >= lmin2
        else:
            clear = np.ones(block, dtype=bool)
        fresh = []   # indices accepted within this block
        for i in range(block):
            ok = clear[i]
            if ok and fresh:
                d = periodic_delta(cand[i] - cand[fresh], cell)
                ok = (d * d).sum(axis=1).min() >= lmin2
            if ok:
                fresh.append(i)
                misses = 0
            else:
                misses += 1
                if misses >= rejection_budget:
                    break
        if fresh:
            accepted = np.vstack([accepted, cand[fresh]])
    if len(accepted) < 2:
        if allow_single and len(accepted) == 1:
            return accepted
        raise GeometryError(
            f"degenerate cell: only {len(accepted)} nucleus fits "
            f"(cell={tuple(cell)}, l_min={l_min})")
    return accepted


# ---------------------------------------------------------------------------
# periodic Voronoi dual
# ---------------------------------------------------------------------------

def _replicate(points, cell):
    n_dim = points.shape[1]
    shifts = sorted(itertools.product((-1, 0, 1), repeat=n_dim),
                    key=lambda s: s != (0,) * n_dim)   # central copy first
    repl = np.vstack([points + np.asarray(s) * cell for s in shifts])
    return repl, shifts


def _facet_measure(vertices, e, n_dim):
    """Area and centroid of one Voronoi ridge (segment in 2D, polygon in 3D)."""
    if n_dim == 2:
        seg = vertices[1] - vertices[0]
        return np.linalg.norm(seg) * THICKNESS_2D, 0.5 * (vertices[0] + vertices[1])
    # order the (convex) polygon vertices by angle around e
    c0 = vertices.mean(axis=0)
    b1 = vertices[0] - c0
    b1 -= (b1 @ e) * e
    nb1 = np.linalg.norm(b1)
    if nb1 == 0.0:
        return 0.0, c0
    b1 /= nb1
    b2 = np.cross(e, b1)
    rel = vertices - c0
    order = np.argsort(np.arctan2(rel @ b2, rel @ b1))
    vv = vertices[order]
    area_vec = np.zeros(3)
    centroid_acc = np.zeros(3)
    area_acc = 0.0
    m = len(vv)
    for k in range(m):
        cr = np.cross(vv[k] - c0, vv[(k + 1) % m] - c0)
        a = 0.5 * np.linalg.norm(cr)
        area_vec += cr
        centroid_acc += a * (c0 + vv[k] + vv[(k + 1) % m]) / 3.0
        area_acc += a
    area = 0.5 * np.linalg.norm(area_vec)
    centroid = centroid_acc / area_acc if area_acc > 0.0 else c0
    return area, centroid


def build_voronoi_dual(nuclei, cell, drop_tol=1e-12):
    """Dual network of the periodic Voronoi tessellation of ``nuclei``.

    Nodes are the nuclei, elements are pairs of nuclei sharing a Voronoi
    facet under periodic wrap.  The tessellation is computed from a Delaunay/
    Voronoi diagram of the 3^n replicated point set; facets of the central
    copy are exact, periodic-image duplicates are merged so each physical
    contact appears once.  Facet normals coincide with the contact direction
    (o = e), hence S* = S.

    Control volumes follow from the pyramid decomposition of each Voronoi
    cell: every facet sits on the bisector plane at distance h/2 from both of
    its nuclei, so W = sum S h / (2 n_dim) over the cell's facets.

    Degenerate co-spherical nucleus configurations that confuse the
    tessellation are retried with a deterministic symbolic perturbation.
    """
    nuclei = np.atleast_2d(np.asarray(nuclei, dtype=float))
    cell = np.asarray(cell, dtype=float)
    n_dim = cell.size
    if nuclei.shape[1] != n_dim:
        raise GeometryError("nuclei dimension does not match the cell")
    if len(nuclei) < 1:
        raise GeometryError("at least one nucleus is required")
    nuclei = np.mod(nuclei, cell)
    if len(nuclei) > 1:
        for i in range(len(nuclei) - 1):
            d = periodic_delta(nuclei[i + 1:] - nuclei[i], cell)
            if (d * d).sum(axis=1).min() <= (1e-12 * cell.max()) ** 2:
                raise GeometryError("nuclei are not pairwise periodic-distinct")

    last_err = None
    for attempt in range(3):
        pts = nuclei
        if attempt > 0:
            # deterministic tie-breaking jitter for co-spherical configurations
            jitter = RandomStream(0x5EED ^ attempt)
            eps = 10.0 ** (attempt - 11) * cell.min()
            pts = nuclei + eps * (jitter.uniform(size=nuclei.shape) - 0.5)
        try:
            net = _voronoi_dual_once(pts, cell, drop_tol)
            _check_construction(net)
            return net
        except (InvariantViolation, Exception) as err:  # qhull raises QhullError
            last_err = err
    raise GeometryError(f"periodic Voronoi construction failed: {last_err}")


def _voronoi_dual_once(points, cell, drop_tol):
    n_dim = cell.size
    n = len(points)
    repl, shifts = _replicate(points, cell)
    vor = Voronoi(repl)

    elems = {}
    for (i_raw, j_raw), ridge in zip(vor.ridge_points, vor.ridge_vertices):
        ci, cj = i_raw // n, j_raw // n
        if ci != 0 and cj != 0:
            continue
        if -1 in ridge:
            continue
        if ci != 0:
            i_raw, j_raw = j_raw, i_raw
            cj = ci
        p, q = i_raw % n, j_raw % n
        s = shifts[cj]
        if p > q or (p == q and s < tuple(-v for v in s)):
            p, q, s = q, p, tuple(-v for v in s)
        key = (p, q, s)
        if key in elems:
            continue
        d = (points[q] + np.asarray(s) * cell) - points[p]
        h = np.linalg.norm(d)
        e = d / h
        area, centroid = _facet_measure(vor.vertices[np.asarray(ridge)], e, n_dim)
        if area < drop_tol * cell.max() ** 2:
            continue
        elems[key] = (h, e, area, centroid)

    if not elems:
        raise InvariantViolation("tessellation produced no conduit elements")
    keys = list(elems.keys())
    node_p = np.array([k[0] for k in keys], dtype=int)
    node_q = np.array([k[1] for k in keys], dtype=int)
    shift = np.array([k[2] for k in keys], dtype=int)
    length = np.array([elems[k][0] for k in keys])
    direction = np.array([elems[k][1] for k in keys])
    area = np.array([elems[k][2] for k in keys])
    centroid = np.array([elems[k][3] for k in keys])

    volumes = np.zeros(n)
    pyramid = area * length / (2.0 * n_dim)
    np.add.at(volumes, node_p, pyramid)
    np.add.at(volumes, node_q, pyramid)

    return DualNetwork(
        n_dim=n_dim, cell=cell.copy(), periodic=True,
        positions=points.copy(), volumes=volumes,
        node_p=node_p, node_q=node_q, length=length,
        direction=direction, normal=direction.copy(),
        area=area, area_star=area.copy(), centroid=centroid,
        image_shift=shift, lambda0=np.ones(len(keys)))


def _check_construction(net):
    """Cheap completeness check; failures trigger the perturbation retry."""
    closure = node_closure_defect(net)
    sums = node_area_sums(net)
    if np.any(sums <= 0.0):
        raise InvariantViolation("isolated node in tessellation")
    if (np.linalg.norm(closure, axis=1) / sums).max() > 1e-9:
        raise InvariantViolation("control volumes are not closed")
    if abs(net.volumes.sum() - net.cell_volume) > 1e-9 * net.cell_volume:
        raise InvariantViolation("control volumes do not partition the cell")


# ---------------------------------------------------------------------------
# structured skewed lattice
# ---------------------------------------------------------------------------

def build_skewed_lattice(cell, divisions, skew_angle_deg):
    """Structured periodic lattice with facet normals rotated off the contacts.

    A regular grid of nodes with axis-aligned contacts, where every facet
    normal o is rotated by the skew angle away from the contact direction e
    in a fixed pattern (in-plane for x/y contacts, towards +x for z
    contacts).  Facet areas are unchanged, so S* = cos(angle) S, which makes
    the lattice a minimal stand-in for tessellations that do not keep o and e
    parallel.
    """
    cell = np.asarray(cell, dtype=float)
    n_dim = cell.size
    divisions = np.broadcast_to(np.asarray(divisions, dtype=int), (n_dim,)).copy()
    if np.any(divisions < 1):
        raise GeometryError("divisions must be >= 1")
    if not 0.0 <= skew_angle_deg < 90.0:
        raise GeometryError("skew angle must lie in [0, 90) degrees")
    theta = np.deg2rad(skew_angle_deg)

    spacing = cell / divisions
    grids = [np.arange(divisions[d]) for d in range(n_dim)]
    idx = np.stack([g.ravel() for g in np.meshgrid(*grids, indexing="ij")], axis=1)
    positions = (idx + 0.5) * spacing
    n = len(positions)
    flat = {tuple(t): k for k, t in enumerate(idx)}

    thickness = THICKNESS_2D if n_dim == 2 else 1.0
    cross = [float(np.prod(np.delete(spacing, d))) * (thickness if n_dim == 2 else 1.0)
             for d in range(n_dim)]
    w_node = float(np.prod(spacing)) * (thickness if n_dim == 2 else 1.0)

    def rotated_normal(e):
        if n_dim == 2:
            c, s = np.cos(theta), np.sin(theta)
            return np.array([c * e[0] - s * e[1], s * e[0] + c * e[1]])
        # rotate towards a fixed perpendicular axis
        perp = np.array([0.0, 0.0, 1.0]) if abs(e[2]) < 0.5 else np.array([1.0, 0.0, 0.0])
        perp = perp - (perp @ e) * e
        perp /= np.linalg.norm(perp)
        return np.cos(theta) * e + np.sin(theta) * perp

    node_p, node_q, shift = [], [], []
    length, area, direction, normal, centroid = [], [], [], [], []
    for k, t in enumerate(idx):
        for d in range(n_dim):
            e = np.zeros(n_dim)
            e[d] = 1.0
            t2 = t.copy()
            t2[d] += 1
            s = np.zeros(n_dim, dtype=int)
            if t2[d] == divisions[d]:
                t2[d] = 0
                s[d] = 1
            node_p.append(k)
            node_q.append(flat[tuple(t2)])
            shift.append(s)
            length.append(spacing[d])
            area.append(cross[d])
            direction.append(e)
            normal.append(rotated_normal(e))
            centroid.append(positions[k] + 0.5 * spacing[d] * e)

    direction = np.array(direction)
    normal = np.array(normal)
    area = np.array(area)
    area_star = np.abs(np.einsum("kd,kd->k", normal, direction)) * area
    return DualNetwork(
        n_dim=n_dim, cell=cell.copy(), periodic=True,
        positions=positions, volumes=np.full(n, w_node),
        node_p=np.array(node_p), node_q=np.array(node_q),
        length=np.array(length), direction=direction, normal=normal,
        area=area, area_star=area_star, centroid=np.array(centroid),
        image_shift=np.array(shift, dtype=int), lambda0=np.ones(len(area)))


# ---------------------------------------------------------------------------
# tiling into a full domain
# ---------------------------------------------------------------------------

def tile_full_domain(rve, repetitions):
    """Tile a periodic cell into a non-periodic full-domain network.

    Interior periodic contacts become real contacts between adjacent copies.
    Contacts crossing the outer boundary are cut: the element is removed and
    its surviving node is tagged as belonging to the crossed wall(s).  Element
    properties (including randomized lambda0) are copied tile-wise, so the
    full model realizes exactly the cell's material field.
    """
    if not rve.periodic:
        raise GeometryError("only periodic networks can be tiled")
    n_dim = rve.n_dim
    reps = np.broadcast_to(np.asarray(repetitions, dtype=int), (n_dim,)).copy()
    if np.any(reps < 1):
        raise GeometryError("repetitions must be >= 1")

    tiles = list(itertools.product(*[range(r) for r in reps]))
    tile_of = {t: k for k, t in enumerate(tiles)}
    n = rve.n_nodes
    positions = np.vstack([rve.positions + np.asarray(t) * rve.cell for t in tiles])
    volumes = np.tile(rve.volumes, len(tiles))

    wall_names = [sign + AXES[d] for d in range(n_dim) for sign in ("-", "+")]
    walls = {w: set() for w in wall_names}
    keep_elem, keep_p, keep_q, keep_off = [], [], [], []
    shifts = rve.image_shift
    for k, t in enumerate(tiles):
        t = np.asarray(t)
        target = t + shifts
        source = t - shifts
        t_ok = np.all((target >= 0) & (target < reps), axis=1)
        s_ok = np.all((source >= 0) & (source < reps), axis=1)
        for m in np.nonzero(t_ok)[0]:
            keep_elem.append(m)
            keep_p.append(k * n + rve.node_p[m])
            keep_q.append(tile_of[tuple(target[m])] * n + rve.node_q[m])
            keep_off.append(t)
        for m in np.nonzero(~t_ok)[0]:
            for d in np.nonzero((target[m] < 0) | (target[m] >= reps))[0]:
                sign = "+" if shifts[m, d] > 0 else "-"
                walls[sign + AXES[d]].add(k * n + rve.node_p[m])
        for m in np.nonzero(~s_ok)[0]:
            for d in np.nonzero((source[m] < 0) | (source[m] >= reps))[0]:
                sign = "+" if shifts[m, d] < 0 else "-"
                walls[sign + AXES[d]].add(k * n + rve.node_q[m])

    keep_elem = np.asarray(keep_elem, dtype=int)
    offsets = np.asarray(keep_off, dtype=float) * rve.cell
    boundary = {w: np.array(sorted(ids), dtype=int) for w, ids in walls.items()}
    return DualNetwork(
        n_dim=n_dim, cell=rve.cell * reps, periodic=False,
        positions=positions, volumes=volumes,
        node_p=np.asarray(keep_p, dtype=int), node_q=np.asarray(keep_q, dtype=int),
        length=rve.length[keep_elem], direction=rve.direction[keep_elem],
        normal=rve.normal[keep_elem], area=rve.area[keep_elem],
        area_star=rve.area_star[keep_elem],
        centroid=rve.centroid[keep_elem] + offsets,
        image_shift=np.zeros((len(keep_elem), n_dim), dtype=int),
        lambda0=rve.lambda0[keep_elem], boundary=boundary)


def boundary_node_sets(network):
    """Wall node sets of a non-periodic network.

    Tiled networks carry exact wall tags recorded while cutting.  For
    imported networks the tags are reconstructed from the facet-closure
    defect of each control volume: a cut facet leaves sum(S e) pointing away
    from the missing wall.  The reconstruction picks every axis whose defect
    component reaches half the largest one, which resolves corners but
    remains a geometric heuristic.
    """
    if network.periodic:
        raise GeometryError("periodic networks have no boundary")
    if network.boundary:
        return network.boundary
    defect = -node_closure_defect(network)          # missing outward area vector
    sums = node_area_sums(network)
    walls = {sign + AXES[d]: [] for d in range(network.n_dim) for sign in ("-", "+")}
    flagged = np.linalg.norm(defect, axis=1) > 1e-6 * np.maximum(sums, 1e-300)
    for i in np.nonzero(flagged)[0]:
        comp = np.abs(defect[i])
        for d in np.nonzero(comp >= 0.5 * comp.max())[0]:
            walls[("+" if defect[i, d] > 0 else "-") + AXES[d]].append(i)
    return {w: np.array(ids, dtype=int) for w, ids in walls.items()}


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------

def node_closure_defect(network):
    """Per-node sum of outward facet area vectors, sum_Q S e (zero if closed)."""
    acc = np.zeros((network.n_nodes, network.n_dim))
    se = network.area[:, None] * network.direction
    np.add.at(acc, network.node_p, se)
    np.add.at(acc, network.node_q, -se)
    return acc


def node_area_sums(network):
    acc = np.zeros(network.n_nodes)
    np.add.at(acc, network.node_p, network.area)
    np.add.at(acc, network.node_q, network.area)
    return acc


def fabric_tensor(network):
    """sum_e h S e (x) e over all elements (equals V0 * I when o || e)."""
    return np.einsum("k,kd,ke->de", network.length * network.area,
                     network.direction, network.direction)


def validate_network(network, rtol=1e-9):
    """Check all structural invariants; raise InvariantViolation on failure.

    Returns a summary dict of the measured deviations (used by the CLI to
    print its invariant report).
    """
    net = network
    report = {}
    bad = np.nonzero(net.volumes <= 0.0)[0]
    if bad.size:
        raise InvariantViolation(f"degenerate control volume at node {bad[0]}")
    if np.any(net.length <= 0.0) or np.any(net.area <= 0.0):
        k = int(np.nonzero((net.length <= 0) | (net.area <= 0))[0][0])
        raise InvariantViolation(f"non-positive length or area at element {k}")

    unit_e = np.abs(np.linalg.norm(net.direction, axis=1) - 1.0)
    unit_o = np.abs(np.linalg.norm(net.normal, axis=1) - 1.0)
    report["unit_vector_dev"] = float(max(unit_e.max(), unit_o.max()))
    if report["unit_vector_dev"] > 1e-12:
        raise InvariantViolation("direction/normal vectors are not unit length")

    proj = np.abs(np.einsum("kd,kd->k", net.normal, net.direction)) * net.area
    report["projected_area_dev"] = float(np.abs(proj - net.area_star).max()
                                         / net.area_star.max())
    if report["projected_area_dev"] > 1e-12:
        raise InvariantViolation("S* does not equal |o.e| S")
    if np.any(net.area_star > net.area * (1 + 1e-12)) or np.any(net.area_star <= 0):
        raise InvariantViolation("projected areas must satisfy 0 < S* <= S")

    span = (net.positions[net.node_q] + net.image_shift * net.cell
            - net.positions[net.node_p])
    gap = np.linalg.norm(span - net.length[:, None] * net.direction, axis=1)
    report["span_dev"] = float((gap / net.length).max())
    if report["span_dev"] > rtol:
        k = int(np.argmax(gap / net.length))
        raise InvariantViolation(f"h e does not span the node pair at element {k}")

    degree = np.zeros(net.n_nodes, dtype=int)
    np.add.at(degree, net.node_p, 1)
    np.add.at(degree, net.node_q, 1)
    if not net.periodic:
        report["isolated_nodes"] = int((degree == 0).sum())
    elif np.any(degree == 0):
        raise InvariantViolation("periodic network has an isolated node")

    if net.periodic:
        closure = np.linalg.norm(node_closure_defect(net), axis=1) / node_area_sums(net)
        report["closure_dev"] = float(closure.max())
        if report["closure_dev"] > rtol:
            i = int(np.argmax(closure))
            raise InvariantViolation(f"control volume of node {i} is not closed")

        vol_dev = abs(net.volumes.sum() - net.cell_volume) / net.cell_volume
        report["volume_partition_dev"] = float(vol_dev)
        if vol_dev > rtol:
            raise InvariantViolation("control volumes do not partition the cell")

        if np.all(np.abs(np.einsum("kd,kd->k", net.normal, net.direction)) > 1 - 1e-12):
            dev = np.linalg.norm(fabric_tensor(net) - net.cell_volume * np.eye(net.n_dim))
            report["fabric_dev"] = float(dev / (net.cell_volume * np.sqrt(net.n_dim)))
            if report["fabric_dev"] > rtol:
                raise InvariantViolation("fabric identity violated")
    return report


# ---------------------------------------------------------------------------
# lattice file I/O
# ---------------------------------------------------------------------------
#
# Line-oriented ASCII:
#   DIM n PERIODIC 0|1 CELL Lx Ly [Lz]
#   NODE id x y [z] W
#   ELEM id p q S Sstar h ex ey [ez] ox oy [oz] sx sy [sz] lambda0
# Floats carry 17 significant digits so the round trip is bitwise exact.
# The facet centroid is not part of the format; imports place it on the
# contact's bisector point x_P + (h/2) e.

def _fmt(x):
    return format(float(x), ".17g")


def export_network(network, path):
    net = network
    lines = ["DIM {} PERIODIC {} CELL {}".format(
        net.n_dim, int(net.periodic), " ".join(_fmt(c) for c in net.cell))]
    for i in range(net.n_nodes):
        lines.append("NODE {} {} {}".format(
            i, " ".join(_fmt(v) for v in net.positions[i]), _fmt(net.volumes[i])))
    for k in range(net.n_elements):
        fields = ([_fmt(net.area[k]), _fmt(net.area_star[k]), _fmt(net.length[k])]
                  + [_fmt(v) for v in net.direction[k]]
                  + [_fmt(v) for v in net.normal[k]]
                  + [str(int(v)) for v in net.image_shift[k]])
        lines.append("ELEM {} {} {} {} {}".format(
            k, int(net.node_p[k]), int(net.node_q[k]), " ".join(fields),
            _fmt(net.lambda0[k])))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def import_network(path):
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip()]
    if not raw or not raw[0].startswith("DIM"):
        raise GeometryError(f"malformed lattice file {path}: missing DIM header")
    head = raw[0].split()
    try:
        n_dim = int(head[1])
        periodic = bool(int(head[3]))
        cell = np.array([float(v) for v in head[5:5 + n_dim]])
    except (IndexError, ValueError) as err:
        raise GeometryError(f"malformed lattice file header: {raw[0]!r}") from err
    if head[2] != "PERIODIC" or head[4] != "CELL" or len(head) != 5 + n_dim:
        raise GeometryError(f"malformed lattice file header: {raw[0]!r}")

    nodes, elems = {}, {}
    for ln in raw[1:]:
        parts = ln.split()
        try:
            if parts[0] == "NODE":
                nodes[int(parts[1])] = [float(v) for v in parts[2:]]
            elif parts[0] == "ELEM":
                elems[int(parts[1])] = parts[2:]
            else:
                raise GeometryError(f"malformed lattice file line: {ln!r}")
        except (IndexError, ValueError) as err:
            raise GeometryError(f"malformed lattice file line: {ln!r}") from err

    n = len(nodes)
    if sorted(nodes) != list(range(n)):
        raise GeometryError("node ids must be consecutive from 0")
    positions = np.array([nodes[i][:n_dim] for i in range(n)])
    volumes = np.array([nodes[i][n_dim] for i in range(n)])
    if any(len(nodes[i]) != n_dim + 1 for i in range(n)):
        raise GeometryError("malformed NODE line: wrong field count")
    bad = np.nonzero(volumes <= 0)[0]
    if bad.size:
        raise InvariantViolation(f"degenerate control volume at node {bad[0]}")

    ne = len(elems)
    if sorted(elems) != list(range(ne)):
        raise GeometryError("element ids must be consecutive from 0")
    width = 2 + 3 + 3 * n_dim + 1
    node_p = np.zeros(ne, dtype=int)
    node_q = np.zeros(ne, dtype=int)
    area = np.zeros(ne)
    area_star = np.zeros(ne)
    length = np.zeros(ne)
    direction = np.zeros((ne, n_dim))
    normal = np.zeros((ne, n_dim))
    shift = np.zeros((ne, n_dim), dtype=int)
    lambda0 = np.zeros(ne)
    for k in range(ne):
        f = elems[k]
        if len(f) != width:
            raise GeometryError(f"malformed ELEM line for element {k}")
        node_p[k], node_q[k] = int(f[0]), int(f[1])
        area[k], area_star[k], length[k] = (float(v) for v in f[2:5])
        direction[k] = [float(v) for v in f[5:5 + n_dim]]
        normal[k] = [float(v) for v in f[5 + n_dim:5 + 2 * n_dim]]
        shift[k] = [int(v) for v in f[5 + 2 * n_dim:5 + 3 * n_dim]]
        lambda0[k] = float(f[-1])
    if node_p.size and (node_p.max() >= n or node_q.max() >= n):
        raise GeometryError("element references an unknown node id")

    centroid = positions[node_p] + 0.5 * length[:, None] * direction
    net = DualNetwork(
        n_dim=n_dim, cell=cell, periodic=periodic,
        positions=positions, volumes=volumes,
        node_p=node_p, node_q=node_q, length=length,
        direction=direction, normal=normal, area=area, area_star=area_star,
        centroid=centroid, image_shift=shift, lambda0=lambda0)
    validate_network(net)
    return net
