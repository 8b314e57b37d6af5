"""Macroscale finite-element solver for the homogenized diffusion equation.

Bilinear 4-node quadrilaterals with 2x2 Gauss integration approximate the
slow field; every integration point evaluates its flux either through the
pre-computed effective conductivity tensor (fast path, multiplicative
materials) or through a live cell-problem solve (slow path).  Time marching
is backward Euler with full Newton and analytic tangents; boundary fluxes
are the Dirichlet reactions of the converged unconstrained residual, which
keeps them consistent with the discrete balance.

The two-field hygro-thermo-chemical variant carries reaction degrees at the
integration points and couples humidity and temperature through the
permeability, the sink/source terms and the sorption capacity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .constitutive import HtcState, htc_point_response
from .rve import effective_tensor

# 2x2 Gauss rule on the bi-unit square
_GP = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) / np.sqrt(3.0)
_GW = np.ones(4)


def _shape(xi, eta):
    n = 0.25 * np.array([(1 - xi) * (1 - eta), (1 + xi) * (1 - eta),
                         (1 + xi) * (1 + eta), (1 - xi) * (1 + eta)])
    dn = 0.25 * np.array([[-(1 - eta), -(1 - xi)], [(1 - eta), -(1 + xi)],
                          [(1 + eta), (1 + xi)], [-(1 + eta), (1 - xi)]])
    return n, dn


class MeshError(ValueError):
    pass


@dataclass
class MacroMesh:
    """Tensor-product mesh of bilinear quadrilaterals with named node sets."""

    nodes: np.ndarray            # (n_nodes, 2)
    quads: np.ndarray            # (n_elem, 4) counter-clockwise connectivity
    thickness: float
    node_sets: dict
    x_coords: np.ndarray
    y_coords: np.ndarray
    # cached integration data, filled lazily
    _shape_n: np.ndarray = field(default=None, repr=False)
    _grad: np.ndarray = field(default=None, repr=False)
    _wdet: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_coords(cls, x_coords, y_coords, thickness=1.0):
        x = np.asarray(x_coords, dtype=float)
        y = np.asarray(y_coords, dtype=float)
        if len(x) < 2 or len(y) < 2 or np.any(np.diff(x) <= 0) or np.any(np.diff(y) <= 0):
            raise MeshError("mesh coordinates must be strictly increasing")
        nx, ny = len(x) - 1, len(y) - 1
        xx, yy = np.meshgrid(x, y, indexing="xy")
        nodes = np.column_stack([xx.ravel(), yy.ravel()])
        nid = lambda i, j: j * (nx + 1) + i
        quads = np.array([[nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)]
                          for j in range(ny) for i in range(nx)], dtype=int)
        sets = {
            "left": np.array([nid(0, j) for j in range(ny + 1)]),
            "right": np.array([nid(nx, j) for j in range(ny + 1)]),
            "bottom": np.array([nid(i, 0) for i in range(nx + 1)]),
            "top": np.array([nid(i, ny) for i in range(nx + 1)]),
        }
        return cls(nodes=nodes, quads=quads, thickness=float(thickness),
                   node_sets=sets, x_coords=x, y_coords=y)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.quads.shape[0]

    def integration_data(self):
        """Shape values, cartesian gradients and weights at the Gauss points.

        Returns (N, B, wdet): N is (4 gp, 4 nodes), B is (4 gp, n_elem,
        4 nodes, 2) and wdet (4 gp, n_elem) includes the thickness.
        """
        if self._shape_n is None:
            coords = self.nodes[self.quads]                       # (ne, 4, 2)
            n_all, b_all, w_all = [], [], []
            for (xi, eta), w in zip(_GP, _GW):
                n, dn = _shape(xi, eta)
                jac = np.einsum("ak,eai->eki", dn, coords)        # (ne, 2, 2)
                det = np.linalg.det(jac)
                if np.any(det <= 0.0):
                    raise MeshError("non-positive Jacobian determinant")
                inv = np.linalg.inv(jac)
                b = np.einsum("ak,eki->eai", dn, inv)             # (ne, 4, 2)
                n_all.append(n)
                b_all.append(b)
                w_all.append(w * det * self.thickness)
            self._shape_n = np.array(n_all)
            self._grad = np.array(b_all)
            self._wdet = np.array(w_all)
        return self._shape_n, self._grad, self._wdet

    def locate(self, points):
        """Element index and local coordinates of each physical point."""
        points = np.atleast_2d(points)
        nx = len(self.x_coords) - 1
        ix = np.clip(np.searchsorted(self.x_coords, points[:, 0], side="right") - 1, 0, nx - 1)
        iy = np.clip(np.searchsorted(self.y_coords, points[:, 1], side="right") - 1, 0,
                     len(self.y_coords) - 2)
        elem = iy * nx + ix
        x0, x1 = self.x_coords[ix], self.x_coords[ix + 1]
        y0, y1 = self.y_coords[iy], self.y_coords[iy + 1]
        xi = 2 * (points[:, 0] - x0) / (x1 - x0) - 1
        eta = 2 * (points[:, 1] - y0) / (y1 - y0) - 1
        return elem, xi, eta

    def evaluate(self, nodal, points):
        """Evaluate a nodal field at physical points via the shape functions."""
        elem, xi, eta = self.locate(points)
        vals = np.empty(len(elem))
        for k, (e, a, b) in enumerate(zip(elem, xi, eta)):
            n, _ = _shape(a, b)
            vals[k] = n @ nodal[self.quads[e]]
        return vals


@dataclass
class DirichletBC:
    """Prescribed field value on a node set, piecewise linear in time."""

    nodes: np.ndarray
    field: str                   # "p", "H" or "T"
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=int)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.size != self.values.size or self.times.size == 0:
            raise ValueError("times and values must have equal nonzero length")
        if np.any(np.diff(self.times) <= 0.0) and self.times.size > 1:
            raise ValueError("breakpoints must be strictly increasing in time")

    def value(self, t):
        return float(np.interp(t, self.times, self.values))


def collect_dirichlet(bcs, t, field_offsets, n_nodes):
    """Merge BC node sets into (dof indices, values); later entries win."""
    assign = {}
    for bc in bcs:
        off = field_offsets[bc.field]
        val = bc.value(t)
        for i in bc.nodes:
            assign[off + int(i)] = val
    idx = np.fromiter(assign.keys(), dtype=int, count=len(assign))
    vals = np.fromiter(assign.values(), dtype=float, count=len(assign))
    order = np.argsort(idx)
    return idx[order], vals[order]


# ---------------------------------------------------------------------------
# integration-point response paths
# ---------------------------------------------------------------------------

class TensorResponse:
    """Fast path: flux from the pre-computed effective conductivity tensor."""

    def __init__(self, tensor, permeability):
        self.Lambda = np.asarray(tensor.Lambda if hasattr(tensor, "Lambda") else tensor,
                                 dtype=float)
        self.permeability = permeability

    def flux(self, p, grad):
        kr, dkr = self.permeability.kr(p)
        lam_g = grad @ self.Lambda.T
        f = -kr[:, None] * lam_g
        df_dgrad = -kr[:, None, None] * self.Lambda[None, :, :]
        df_dp = -dkr[:, None] * lam_g
        return f, df_dgrad, df_dp


class LiveCellResponse:
    """Slow path: every evaluation re-assembles and solves the cell problem.

    The tangent uses the multiplicative structure of the material
    (d lambda / dp proportional to lambda), which is exact for the material
    families this package ships.
    """

    def __init__(self, network, permeability):
        self.network = network
        self.permeability = permeability

    def flux(self, p, grad):
        kr, dkr = self.permeability.kr(p)
        n_pts, n_dim = grad.shape
        f = np.empty_like(grad)
        df_dgrad = np.empty((n_pts, n_dim, n_dim))
        df_dp = np.empty_like(grad)
        for i in range(n_pts):
            tensor = effective_tensor(self.network, self.network.lambda0 * kr[i])
            f[i] = -tensor.Lambda @ grad[i]
            df_dgrad[i] = -tensor.Lambda
            df_dp[i] = (dkr[i] / kr[i]) * f[i]
        return f, df_dgrad, df_dp


# ---------------------------------------------------------------------------
# single-field pressure system
# ---------------------------------------------------------------------------

class PressureSystem:
    """Weak form of  c(p) dp/dt + div f = q(p)  with f from the response path."""

    def __init__(self, mesh, response, capacity_source, bcs):
        self.mesh = mesh
        self.response = response
        self.material = capacity_source
        self.bcs = bcs
        self.n_dof = mesh.n_nodes

    def dirichlet(self, t):
        return collect_dirichlet(self.bcs, t, {"p": 0}, self.mesh.n_nodes)

    def residual_jacobian(self, u, u_prev, dt):
        mesh = self.mesh
        shape_n, grads, wdet = mesh.integration_data()
        conn = mesh.quads
        ue = u[conn]                                          # (ne, 4)
        ue_prev = u_prev[conn] if dt is not None else None

        res = np.zeros(self.n_dof)
        ke_acc = np.zeros((mesh.n_elements, 4, 4))
        re_acc = np.zeros((mesh.n_elements, 4))
        for g in range(4):
            n, b, wd = shape_n[g], grads[g], wdet[g]
            p = ue @ n
            grad = np.einsum("eai,ea->ei", b, ue)
            f, df_dgrad, df_dp = self.response.flux(p, grad)
            src, dsrc = self.material.source(p)

            re = -np.einsum("eai,ei->ea", b, f) - np.outer(src, n)
            # the flux tangent enters with the sign of -B.f
            ke = (np.einsum("eai,eij,ebj->eab", b, -df_dgrad, b)
                  + np.einsum("eai,ei,b->eab", b, -df_dp, n)
                  - np.einsum("e,a,b->eab", dsrc, n, n))
            if dt is not None:
                rate = (p - ue_prev @ n) / dt
                cap, dcap = self.material.capacity(p)
                re += np.outer(cap * rate, n)
                ke += np.einsum("e,a,b->eab", cap / dt + dcap * rate, n, n)
            re_acc += wd[:, None] * re
            ke_acc += wd[:, None, None] * ke

        np.add.at(res, conn, re_acc)
        rows = np.repeat(conn, 4, axis=1).ravel()    # a-major ...
        cols = np.tile(conn, (1, 4)).ravel()         # ... with b fastest
        jac = sp.coo_matrix((ke_acc.ravel(), (rows, cols)),
                            shape=(self.n_dof, self.n_dof)).tocsr()
        return res, jac


# ---------------------------------------------------------------------------
# two-field HTC system
# ---------------------------------------------------------------------------

class HtcMacroSystem:
    """Coupled humidity/temperature system with hydration state at the IPs.

    Unknown layout: u = [H of all nodes, T of all nodes].  The unit
    conductivity tensor of the attached cell geometry scales the moisture
    permeability D_H(H, T) and the heat conductivity.
    """

    def __init__(self, mesh, unit_tensor, params, bcs):
        self.mesh = mesh
        self.unit = np.asarray(unit_tensor, dtype=float)
        self.prm = params
        self.bcs = bcs
        self.n_dof = 2 * mesh.n_nodes
        # reaction state lives at the Gauss points, laid out (gp, elem)
        self.state = HtcState.zeros((4, mesh.n_elements))
        self.cum_heat_source = 0.0      # integral of q_T dV dt [J]
        nsh, b, _ = mesh.integration_data()
        self._bub = np.einsum("geai,ij,gebj->geab", b, self.unit, b)
        self._nn = np.einsum("ga,gb->gab", nsh, nsh)

    def dirichlet(self, t):
        n = self.mesh.n_nodes
        return collect_dirichlet(self.bcs, t, {"H": 0, "T": n}, n)

    def split(self, u):
        n = self.mesh.n_nodes
        return u[:n], u[n:]

    def residual_jacobian(self, u, u_prev, dt):
        mesh = self.mesh
        n = mesh.n_nodes
        nsh, b, wd = mesh.integration_data()     # (g,a), (g,e,a,i), (g,e)
        conn = mesh.quads
        hv, tv = self.split(u)
        he, te = hv[conn], tv[conn]
        rho_ct = self.prm.rho * self.prm.ct
        kap = self.prm.heat_conductivity

        # everything below is batched over (gauss point g, element e)
        H = np.einsum("ga,ea->ge", nsh, he)
        T = np.einsum("ga,ea->ge", nsh, te)
        grad_h = np.einsum("geai,ea->gei", b, he)
        grad_t = np.einsum("geai,ea->gei", b, te)
        pv = htc_point_response(H, T, self.state, dt, self.prm)

        lam_gh = np.einsum("gei,ji->gej", grad_h, self.unit)
        lam_gt = np.einsum("gei,ji->gej", grad_t, self.unit)

        rh_acc = (np.einsum("ge,geai,gei->ea", wd, b, pv.DH[..., None] * lam_gh)
                  + np.einsum("ge,ge,ga->ea", wd, pv.q_H, nsh))
        rt_acc = (np.einsum("ge,geai,gei->ea", wd, b, kap * lam_gt)
                  - np.einsum("ge,ge,ga->ea", wd, pv.q_T, nsh))

        b_gh_n = np.einsum("geai,gei,gb->geab", b, lam_gh, nsh)
        hh = (np.einsum("ge,geab->eab", wd * pv.DH, self._bub)
              + np.einsum("ge,geab->eab", wd * pv.dDH_dH, b_gh_n)
              + np.einsum("ge,gab->eab", wd * pv.dqH_dH, self._nn))
        ht = (np.einsum("ge,geab->eab", wd * pv.dDH_dT, b_gh_n)
              + np.einsum("ge,gab->eab", wd * pv.dqH_dT, self._nn))
        tt = (kap * np.einsum("ge,geab->eab", wd, self._bub)
              - np.einsum("ge,gab->eab", wd * pv.dqT_dT, self._nn))
        th = -np.einsum("ge,gab->eab", wd * pv.dqT_dH, self._nn)

        if dt is not None:
            hp, tp = self.split(u_prev)
            rate_h = (H - np.einsum("ga,ea->ge", nsh, hp[conn])) / dt
            rate_t = (T - np.einsum("ga,ea->ge", nsh, tp[conn])) / dt
            rh_acc += np.einsum("ge,ge,ga->ea", wd, pv.cap_H * rate_h, nsh)
            rt_acc += rho_ct * np.einsum("ge,ge,ga->ea", wd, rate_t, nsh)
            hh += np.einsum("ge,gab->eab",
                            wd * (pv.cap_H / dt + pv.dcapH_dH * rate_h), self._nn)
            ht += np.einsum("ge,gab->eab", wd * (pv.dcapH_dT * rate_h), self._nn)
            tt += (rho_ct / dt) * np.einsum("ge,gab->eab", wd, self._nn)

        res = np.zeros(self.n_dof)
        np.add.at(res, conn, rh_acc)
        np.add.at(res, n + conn, rt_acc)
        blocks = {"HH": hh, "HT": ht, "TH": th, "TT": tt}

        rows_e = np.repeat(conn, 4, axis=1).ravel()  # a-major ...
        cols_e = np.tile(conn, (1, 4)).ravel()       # ... with b fastest
        data, rows, cols = [], [], []
        offs = {"H": 0, "T": n}
        for key, blk in blocks.items():
            rows.append(rows_e + offs[key[0]])
            cols.append(cols_e + offs[key[1]])
            data.append(blk.ravel())
        jac = sp.coo_matrix((np.concatenate(data),
                             (np.concatenate(rows), np.concatenate(cols))),
                            shape=(self.n_dof, self.n_dof)).tocsr()
        return res, jac

    def commit(self, u, t, dt):
        """Accept the step: advance reaction degrees, tally released heat."""
        mesh = self.mesh
        nsh, _, wd = mesh.integration_data()
        hv, tv = self.split(u)
        H = np.einsum("ga,ea->ge", nsh, hv[mesh.quads])
        T = np.einsum("ga,ea->ge", nsh, tv[mesh.quads])
        pv = htc_point_response(H, T, self.state, dt, self.prm)
        self.cum_heat_source += float((wd * pv.q_T).sum()) * (dt or 0.0)
        self.state.alpha_c = pv.alpha_c_new
        self.state.alpha_s = pv.alpha_s_new

    def alpha_at(self, points):
        """Cement hydration degree at physical points (nearest Gauss point)."""
        mesh = self.mesh
        elem, xi, eta = mesh.locate(points)
        out = np.empty(len(elem))
        for k, (e, a, bta) in enumerate(zip(elem, xi, eta)):
            g = int(np.argmin(np.hypot(_GP[:, 0] - a, _GP[:, 1] - bta)))
            out[k] = self.state.alpha_c[g, e]
        return out


def boundary_flux(reactions, node_sets, offset=0):
    """Signed mass/heat rate through each named Dirichlet set.

    Positive values flow into the domain.  ``reactions`` is the
    unconstrained residual at the converged state; ``offset`` selects the
    field block for multi-field systems.
    """
    return {name: float(reactions[offset + np.asarray(ids, dtype=int)].sum())
            for name, ids in node_sets.items()}
