"""Fully resolved lattice reference solver.

Integrates the control-volume balance directly on a tiled (non-periodic)
network:

    W c(p) dp/dt + sum_Q S* j = W q(p),      j = -lambda(p_bar) (p_Q - p_P)/h,

with the element coefficient evaluated at the arithmetic mean of the two
nodal values.  This is the verification oracle for the homogenized path: it
shares the Newton/backward-Euler engine and the boundary-flux convention
(Dirichlet reactions, positive into the domain) with the macroscale solver.

The hygro-thermo-chemical variant carries the reaction degrees at the nodes
and couples the two nodal fields exactly as the macro solver couples them at
integration points.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .constitutive import HtcState, htc_moisture_permeability, htc_point_response
from .macro import collect_dirichlet


@dataclass
class FullProblem:
    """Tiled network with its material, sources and boundary conditions."""

    network: object
    bcs: list                     # DirichletBC over node ids of the network
    permeability: object = None   # kr provider for the pressure variant
    capacity_source: object = None
    htc_params: object = None     # set for the two-field variant

    def __post_init__(self):
        if self.network.periodic:
            raise ValueError("the full model runs on tiled, non-periodic networks")
        fixed = set()
        for bc in self.bcs:
            fixed.update(int(i) for i in bc.nodes)
        degree = np.zeros(self.network.n_nodes, dtype=int)
        np.add.at(degree, self.network.node_p, 1)
        np.add.at(degree, self.network.node_q, 1)
        floating = np.nonzero(degree == 0)[0]
        bad = [i for i in floating if i not in fixed]
        if bad:
            raise ValueError(f"floating node without element or boundary condition: {bad[0]}")


class LatticePressureSystem:
    """Nodal balance of the single-field lattice problem."""

    def __init__(self, problem):
        self.net = problem.network
        self.perm = problem.permeability
        self.material = problem.capacity_source
        self.bcs = problem.bcs
        self.n_dof = self.net.n_nodes

    def dirichlet(self, t):
        return collect_dirichlet(self.bcs, t, {"p": 0}, self.n_dof)

    def residual_jacobian(self, u, u_prev, dt):
        net = self.net
        p, q = net.node_p, net.node_q
        pbar = 0.5 * (u[p] + u[q])
        kr, dkr = self.perm.kr(pbar)
        lam = net.lambda0 * kr
        dlam = net.lambda0 * dkr
        g = (u[q] - u[p]) / net.length
        j = -lam * g

        res = np.zeros(self.n_dof)
        flow = net.area_star * j
        np.add.at(res, p, flow)
        np.add.at(res, q, -flow)

        #   dj/du_P = -dlam/2 g + lam/h,   dj/du_Q = -dlam/2 g - lam/h
        dj_dp = net.area_star * (-0.5 * dlam * g + lam / net.length)
        dj_dq = net.area_star * (-0.5 * dlam * g - lam / net.length)
        rows = np.concatenate([p, p, q, q])
        cols = np.concatenate([p, q, p, q])
        vals = np.concatenate([dj_dp, dj_dq, -dj_dp, -dj_dq])

        src, dsrc = self.material.source(u)
        res -= net.volumes * src
        diag = -net.volumes * dsrc
        if dt is not None:
            rate = (u - u_prev) / dt
            cap, dcap = self.material.capacity(u)
            res += net.volumes * cap * rate
            diag += net.volumes * (cap / dt + dcap * rate)
        all_ids = np.arange(self.n_dof)
        jac = sp.coo_matrix((np.concatenate([vals, diag]),
                             (np.concatenate([rows, all_ids]),
                              np.concatenate([cols, all_ids]))),
                            shape=(self.n_dof, self.n_dof)).tocsr()
        return res, jac


class LatticeHtcSystem:
    """Two-field lattice balance with nodal hydration state.

    Element coefficients are evaluated at the average of the two nodal
    fields; both fluxes scale with the element's intrinsic coefficient
    lambda0 (unity unless randomized), mirroring the multiplicative split of
    the homogenized path.
    """

    def __init__(self, problem):
        self.net = problem.network
        self.prm = problem.htc_params
        self.bcs = problem.bcs
        n = self.net.n_nodes
        self.n_dof = 2 * n
        self.state = HtcState.zeros(n)
        self.cum_heat_source = 0.0      # integral of q_T dV dt [J]

    def dirichlet(self, t):
        n = self.net.n_nodes
        return collect_dirichlet(self.bcs, t, {"H": 0, "T": n}, n)

    def split(self, u):
        n = self.net.n_nodes
        return u[:n], u[n:]

    def residual_jacobian(self, u, u_prev, dt):
        net = self.net
        n = net.n_nodes
        p, q = net.node_p, net.node_q
        hv, tv = self.split(u)
        prm = self.prm

        # nodal storage and source terms at the current iterate
        pv = htc_point_response(hv, tv, self.state, dt, prm)
        res = np.zeros(self.n_dof)
        rows, cols, vals = [], [], []
        all_ids = np.arange(n)

        def add_block(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        # moisture flux, coefficient at the element averages
        hbar = 0.5 * (hv[p] + hv[q])
        tbar = 0.5 * (tv[p] + tv[q])
        dh, ddh_dH, ddh_dT = htc_moisture_permeability(hbar, tbar, prm)
        dh, ddh_dH, ddh_dT = (net.lambda0 * dh, net.lambda0 * ddh_dH,
                              net.lambda0 * ddh_dT)
        gh = (hv[q] - hv[p]) / net.length
        jh = -dh * gh
        flow = net.area_star * jh
        np.add.at(res, p, flow)
        np.add.at(res, q, -flow)
        djh_dhp = net.area_star * (-0.5 * ddh_dH * gh + dh / net.length)
        djh_dhq = net.area_star * (-0.5 * ddh_dH * gh - dh / net.length)
        djh_dt = net.area_star * (-0.5 * ddh_dT * gh)
        add_block(p, p, djh_dhp)
        add_block(p, q, djh_dhq)
        add_block(q, p, -djh_dhp)
        add_block(q, q, -djh_dhq)
        add_block(p, n + p, djh_dt)
        add_block(p, n + q, djh_dt)
        add_block(q, n + p, -djh_dt)
        add_block(q, n + q, -djh_dt)

        # heat flux, constant conductivity
        kap = net.lambda0 * prm.heat_conductivity
        gt = (tv[q] - tv[p]) / net.length
        flow_t = net.area_star * (-kap * gt)
        np.add.at(res, n + p, flow_t)
        np.add.at(res, n + q, -flow_t)
        kt = net.area_star * kap / net.length
        add_block(n + p, n + p, kt)
        add_block(n + p, n + q, -kt)
        add_block(n + q, n + p, -kt)
        add_block(n + q, n + q, kt)

        # sink/source terms: hydration consumes moisture and releases heat
        res[:n] += net.volumes * pv.q_H
        res[n:] -= net.volumes * pv.q_T
        add_block(all_ids, all_ids, net.volumes * pv.dqH_dH)
        add_block(all_ids, n + all_ids, net.volumes * pv.dqH_dT)
        add_block(n + all_ids, all_ids, -net.volumes * pv.dqT_dH)
        add_block(n + all_ids, n + all_ids, -net.volumes * pv.dqT_dT)

        if dt is not None:
            hp, tp = self.split(u_prev)
            rate_h = (hv - hp) / dt
            rate_t = (tv - tp) / dt
            res[:n] += net.volumes * pv.cap_H * rate_h
            res[n:] += net.volumes * prm.rho * prm.ct * rate_t
            add_block(all_ids, all_ids,
                      net.volumes * (pv.cap_H / dt + pv.dcapH_dH * rate_h))
            add_block(all_ids, n + all_ids, net.volumes * pv.dcapH_dT * rate_h)
            add_block(n + all_ids, n + all_ids,
                      net.volumes * prm.rho * prm.ct / dt)

        jac = sp.coo_matrix((np.concatenate(vals),
                             (np.concatenate(rows), np.concatenate(cols))),
                            shape=(self.n_dof, self.n_dof)).tocsr()
        return res, jac

    def commit(self, u, t, dt):
        hv, tv = self.split(u)
        pv = htc_point_response(hv, tv, self.state, dt, self.prm)
        self.cum_heat_source += float(self.net.volumes @ pv.q_T) * (dt or 0.0)
        self.state.alpha_c = pv.alpha_c_new
        self.state.alpha_s = pv.alpha_s_new


def interpolate_line(network, values, start, end, n_samples, k=4):
    """Inverse-distance interpolation of nodal values along a line segment.

    Uniform samples between ``start`` and ``end`` (endpoints included), each
    taking the k nearest lattice nodes with 1/d^2 weights; a sample sitting
    on a node returns the nodal value exactly.
    """
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    frac = np.linspace(0.0, 1.0, n_samples)
    points = start[None, :] + frac[:, None] * (end - start)[None, :]
    out = interpolate_at(network, values, points, k=k)
    return frac * np.linalg.norm(end - start), out


def interpolate_at(network, values, points, k=4):
    values = np.asarray(values, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    tree = cKDTree(network.positions)
    k_eff = min(k, network.n_nodes)
    dist, idx = tree.query(points, k=k_eff)
    dist = np.atleast_2d(dist)
    idx = np.atleast_2d(idx)
    exact = dist[:, 0] < 1e-12
    with np.errstate(divide="ignore"):
        w = 1.0 / dist ** 2
    w[exact] = 0.0
    w[exact, 0] = 1.0
    return (w * values[idx]).sum(axis=1) / w.sum(axis=1)
