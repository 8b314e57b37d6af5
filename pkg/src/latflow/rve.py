"""Steady-state cell problem on a periodic network and its pre-computed tensor.

The periodic cell is loaded by an eigen gradient: the macroscopic pressure
gradient a projects onto every conduit element as g_hat = -a.e, and the
unknown fluctuation pressures solve the linear steady balance

    sum_Q S* lambda ( (u_Q - u_P)/h + a.e ) = 0      for every control volume,

where u denotes the fluctuation field.  Periodicity is native: wrapped
elements connect the same physical nodes, so no constraint equations are
needed and the operator stays sparse.  One node is pinned to fix the free
constant; the zero volumetric mean of the fluctuation is enforced in
post-processing only.

For multiplicative materials lambda = lambda0 * kr(p0) the nonlinear factor
cancels from the cell problem, so the n_dim unit-gradient solutions are
pre-computed once and collected into a symmetric effective conductivity
tensor; the macroscopic flux is then f = -kr(p0) Lambda a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .numerics import SparseSymmetric, solve_spd


class RveError(RuntimeError):
    """Cell problem cannot be assembled or solved."""


@dataclass
class RveSystem:
    """Assembled cell operator: SPD after pinning one node."""

    network: object
    lam: np.ndarray              # element permeability coefficients [s]
    conductance: np.ndarray      # k_e = lambda S* / h
    operator: SparseSymmetric
    pinned: int


@dataclass
class RveSolution:
    """Fluctuation field and element fluxes for one macroscopic gradient."""

    gradient: np.ndarray         # imposed macroscopic gradient a [Pa/m]
    p1: np.ndarray               # fluctuation pressure per node [Pa]
    g0: np.ndarray               # element pressure gradient [Pa/m]
    j0: np.ndarray               # element flux density [kg/(m^2 s)]
    f: np.ndarray                # macroscopic flux vector [kg/(m^2 s)]


@dataclass
class EffectiveTensor:
    """Symmetric effective conductivity with the stored unit solutions."""

    Lambda: np.ndarray           # (n_dim, n_dim) [s]
    unit_p1: np.ndarray          # (n_nodes, n_dim) fluctuations per unit gradient
    unit_j0: np.ndarray          # (n_elem, n_dim) fluxes per unit gradient
    unit_f: np.ndarray           # (n_dim, n_dim) columns are unit-gradient fluxes


def assemble(network, lam, pinned=0):
    """Assemble the cell operator for the given element permeabilities.

    Every element scatters its conductance lambda S*/h into the four
    (P, P), (Q, Q), (P, Q), (Q, P) slots; self-contacts of small periodic
    cells cancel exactly and vanish from the operator.  Raises on
    disconnected networks, whose pinned operator would stay singular.
    """
    if not network.periodic:
        raise RveError("cell problems require a periodic network")
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (network.n_elements,))
    if np.any(lam <= 0.0):
        raise RveError("element permeability coefficients must be positive")
    p, q = network.node_p, network.node_q
    k = lam * network.area_star / network.length
    n = network.n_nodes
    rows = np.concatenate([p, q, p, q])
    cols = np.concatenate([p, q, q, p])
    vals = np.concatenate([k, k, -k, -k])
    operator = SparseSymmetric.from_triplets(n, rows, cols, vals)

    if n > 1:
        adj = sp.coo_matrix((np.ones(len(p)), (p, q)), shape=(n, n))
        n_comp, labels = connected_components(adj, directed=False)
        if n_comp > 1:
            sizes = np.bincount(labels)
            raise RveError(
                f"singular cell problem: network splits into {n_comp} components "
                f"of sizes {sizes.tolist()}")
    if not 0 <= pinned < n:
        raise RveError("pinned node id out of range")
    return RveSystem(network=network, lam=lam, conductance=k,
                     operator=operator, pinned=pinned)


def solve_eigen_gradient(system, a, tol=1e-12):
    """Solve the cell problem for the macroscopic gradient ``a``.

    The right-hand side carries the eigen-gradient load, rhs_P = a . sum_Q
    lambda S* e over the facets of each control volume.  The fluctuation is
    reconstructed with zero volumetric mean; gradients, fluxes and the
    macroscopic flux vector are pin-independent.
    """
    net = system.network
    a = np.asarray(a, dtype=float)
    if a.shape != (net.n_dim,) or not np.all(np.isfinite(a)):
        raise RveError("macroscopic gradient must be a finite n_dim vector")

    p, q = net.node_p, net.node_q
    proj = system.lam * net.area_star * (net.direction @ a)
    rhs = np.zeros(net.n_nodes)
    np.add.at(rhs, p, proj)
    np.add.at(rhs, q, -proj)

    u = np.zeros(net.n_nodes)
    free = np.ones(net.n_nodes, dtype=bool)
    free[system.pinned] = False
    if free.any() and np.linalg.norm(rhs[free]) > 0.0:
        sub = system.operator.matrix[free][:, free]
        u[free], _ = solve_spd(sub, rhs[free], tol=tol)
    # zero weighted volumetric mean, enforced in post-processing only
    u -= (net.volumes @ u) / net.volumes.sum()

    g0 = (u[q] - u[p]) / net.length + net.direction @ a
    j0 = -system.lam * g0
    return RveSolution(gradient=a.copy(), p1=u, g0=g0, j0=j0,
                       f=macro_flux(j0, net))


def macro_flux(j0, network):
    """Macroscopic flux vector f = (1/V0) sum_e h S* j0 e over the elements."""
    w = network.length * network.area_star * np.asarray(j0, dtype=float)
    return (w[:, None] * network.direction).sum(axis=0) / network.cell_volume


def node_flux_balance(solution, network):
    """Per-node sum of outward projected fluxes (zero at equilibrium)."""
    balance = np.zeros(network.n_nodes)
    flow = network.area_star * solution.j0
    np.add.at(balance, network.node_p, flow)
    np.add.at(balance, network.node_q, -flow)
    return balance


def effective_tensor(network, lam0, pinned=0, asym_tol=1e-6):
    """Pre-compute the effective conductivity tensor from unit-gradient solves.

    Column i of Lambda is minus the macroscopic flux under the unit gradient
    along axis i.  The result is symmetrized by (L + L^T)/2; an asymmetry
    beyond ``asym_tol`` (relative) signals an assembly defect and raises
    instead of being silently averaged away.
    """
    system = assemble(network, lam0, pinned=pinned)
    n_dim = network.n_dim
    unit_p1 = np.zeros((network.n_nodes, n_dim))
    unit_j0 = np.zeros((network.n_elements, n_dim))
    unit_f = np.zeros((n_dim, n_dim))
    for i in range(n_dim):
        sol = solve_eigen_gradient(system, np.eye(n_dim)[i])
        unit_p1[:, i] = sol.p1
        unit_j0[:, i] = sol.j0
        unit_f[:, i] = sol.f
    lam_mat = -unit_f
    scale = np.abs(lam_mat).max()
    asym = np.abs(lam_mat - lam_mat.T).max()
    if asym > asym_tol * scale:
        raise RveError(f"effective tensor asymmetry {asym / scale:.3e} exceeds "
                       f"{asym_tol:g}; assembly is inconsistent")
    return EffectiveTensor(Lambda=0.5 * (lam_mat + lam_mat.T),
                           unit_p1=unit_p1, unit_j0=unit_j0, unit_f=unit_f)


def fast_response(tensor, kr, a):
    """Macroscopic flux from the pre-computed tensor: f = -kr Lambda a."""
    return -kr * (tensor.Lambda @ np.asarray(a, dtype=float))


def fast_fields(tensor, kr, a):
    """Reconstructed fluctuation and element fluxes for the gradient ``a``.

    The fluctuation is the plain superposition of the stored unit solutions;
    the flux densities additionally scale with the nonlinear factor.
    """
    a = np.asarray(a, dtype=float)
    return tensor.unit_p1 @ a, kr * (tensor.unit_j0 @ a)
