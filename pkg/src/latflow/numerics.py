"""Shared numerical kernels.

Sparse symmetric storage and a Jacobi-preconditioned conjugate gradient
solver with a dense direct fallback for small systems, seeded random streams
with a stable draw order, and the Newton / backward-Euler engine used by both
the lattice solver and the macroscale finite-element solver.

Assembly scatters and reductions run in fixed index order through numpy, so
repeated runs with the same inputs are bit-identical.  The Newton linear
systems are generally unsymmetric (permeability derivatives, two-field
coupling) and are handled by a direct sparse LU, which is adequate for the
desk-scale problems this package targets; the conjugate gradient path is
reserved for the symmetric positive definite cell-problem systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class SolverError(RuntimeError):
    """Linear or nonlinear solver failed to converge."""


class NewtonError(SolverError):
    """Newton iteration exceeded its iteration budget."""


# ---------------------------------------------------------------------------
# sparse symmetric operator
# ---------------------------------------------------------------------------

@dataclass
class SparseSymmetric:
    """Symmetric sparse operator kept in compressed-row form."""

    matrix: sp.csr_matrix

    @classmethod
    def from_triplets(cls, n, rows, cols, values):
        """Accumulate duplicate (row, col) entries and finalize to CSR.

        Explicit zeros created by cancellation (for example self-contacts of
        a periodic cell) are pruned.  Symmetry is verified, not assumed.
        """
        mat = sp.coo_matrix((values, (rows, cols)), shape=(n, n)).tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        scale = np.abs(mat.data).max() if mat.nnz else 1.0
        asym = abs(mat - mat.T)
        if asym.nnz and asym.max() > 1e-12 * scale:
            raise ValueError(f"operator is not symmetric: max |A - A^T| = {asym.max():g}")
        return cls(mat)

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def diagonal(self):
        return self.matrix.diagonal()

    def __matmul__(self, x):
        return self.matrix @ x


def solve_spd(A, b, tol=1e-12, max_iter=None, dense_cutoff=500, collect_iterates=False):
    """Solve the SPD system ``A x = b``.

    Small systems (below ``dense_cutoff`` unknowns) go through a dense direct
    solve; larger ones use conjugate gradients with a diagonal (Jacobi)
    preconditioner.  Convergence means ``||A x - b|| <= tol * ||b||``.

    Returns ``(x, info)`` where ``info`` carries the iteration count and the
    residual-norm history (and the iterate history when
    ``collect_iterates`` is set, which tests use to monitor the energy-norm
    error decay).
    """
    mat = A.matrix if isinstance(A, SparseSymmetric) else A
    b = np.asarray(b, dtype=float)
    n = b.size
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros(n), {"iterations": 0, "residuals": [0.0], "method": "trivial"}

    if n < dense_cutoff:
        dense = mat.toarray() if sp.issparse(mat) else np.asarray(mat, dtype=float)
        x = np.linalg.solve(dense, b)
        res = np.linalg.norm(dense @ x - b)
        return x, {"iterations": 1, "residuals": [res / nb], "method": "dense"}

    if max_iter is None:
        max_iter = 50 * n
    diag = mat.diagonal()
    if np.any(diag <= 0.0):
        raise SolverError("operator diagonal is not positive; system is not SPD")
    inv_diag = 1.0 / diag

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    residuals = [1.0]
    iterates = [x.copy()] if collect_iterates else None
    for it in range(1, max_iter + 1):
        Ap = mat @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rn = np.linalg.norm(r) / nb
        residuals.append(rn)
        if collect_iterates:
            iterates.append(x.copy())
        if rn <= tol:
            info = {"iterations": it, "residuals": residuals, "method": "pcg"}
            if collect_iterates:
                info["iterates"] = iterates
            return x, info
        z = inv_diag * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"conjugate gradients did not reach tol={tol:g} in {max_iter} iterations "
        f"(last relative residual {residuals[-1]:.3e})"
    )


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

@dataclass
class RandomStream:
    """Seeded random stream with a platform-stable draw sequence.

    Backed by numpy's PCG64 generator, whose bit stream is stable across
    platforms for a fixed seed.  ``counter`` tracks how many variates have
    been drawn, so two streams with equal (seed, counter) continue
    identically.
    """

    seed: int
    algorithm: str = "pcg64"
    counter: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.algorithm != "pcg64":
            raise ValueError(f"unknown random stream algorithm {self.algorithm!r}")
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        if self.counter:
            self._gen.random(self.counter)

    def _count(self, size):
        self.counter += int(np.prod(size)) if size is not None else 1

    def uniform(self, low=0.0, high=1.0, size=None):
        self._count(size)
        return low + (high - low) * self._gen.random(size)

    def standard_normal(self, size=None):
        self._count(size)
        return self._gen.standard_normal(size)


def lognormal(stream, mean, cov, size=None):
    """Lognormal draws parameterized by their mean and coefficient of variation.

    ``sigma^2 = ln(1 + cov^2)`` and ``mu = ln(mean) - sigma^2 / 2`` so that
    ``E[X] = mean`` exactly; ``cov = 0`` degenerates to the constant ``mean``.
    """
    if mean <= 0.0:
        raise ValueError("lognormal mean must be positive")
    if cov < 0.0:
        raise ValueError("coefficient of variation must be non-negative")
    if cov == 0.0:
        return mean if size is None else np.full(size, float(mean))
    sigma2 = np.log1p(cov * cov)
    mu = np.log(mean) - 0.5 * sigma2
    return np.exp(mu + np.sqrt(sigma2) * stream.standard_normal(size))


# ---------------------------------------------------------------------------
# Newton / backward Euler engine
# ---------------------------------------------------------------------------
#
# Implicit systems are duck-typed with:
#   n_dof                                  -- number of unknowns
#   residual_jacobian(u, u_prev, dt)       -- unconstrained residual and CSR
#                                             Jacobian; dt=None drops the
#                                             transient term (steady mode)
#   dirichlet(t)                           -- (dof indices, prescribed values)
#   commit(u, t, dt)                       -- accept the step (advance
#                                             internal variables); optional
#
# Reactions are read off the unconstrained residual at the converged state,
# which makes boundary fluxes variationally consistent with the balance the
# solver actually enforces.


@dataclass
class NewtonOptions:
    tol: float = 1e-8        # relative residual reduction
    abs_tol: float = 0.0     # absolute floor on the residual norm
    du_tol: float = 1e-12    # relative increment floor (near-stationary steps)
    max_iter: int = 25
    max_halvings: int = 10   # step subdivision attempts on Newton failure


@dataclass
class StepResult:
    u: np.ndarray
    reactions: np.ndarray    # unconstrained residual at the converged state
    iterations: int


def newton_solve(system, u_start, u_prev, dt, t, options=None):
    """Full Newton iteration on one (possibly steady) implicit step."""
    opts = options or NewtonOptions()
    idx, vals = system.dirichlet(t)
    u = np.array(u_start, dtype=float, copy=True)
    u[idx] = vals
    keep = np.ones(system.n_dof)
    keep[idx] = 0.0
    r0 = None
    raw = None
    du_norm = None
    u_scale = max(np.linalg.norm(u), 1.0)
    for it in range(opts.max_iter + 1):
        raw, jac = system.residual_jacobian(u, u_prev, dt)
        res = raw.copy()
        res[idx] = 0.0
        norm = np.linalg.norm(res)
        if not np.isfinite(norm):
            raise NewtonError(f"diverged state: non-finite residual at t={t:g}")
        if r0 is None:
            r0 = norm
        converged = norm <= max(opts.tol * r0, opts.abs_tol) or r0 == 0.0
        # a vanishing increment means the residual floor is roundoff noise
        converged = converged or (du_norm is not None
                                  and du_norm <= opts.du_tol * u_scale)
        if converged:
            return StepResult(u=u, reactions=raw, iterations=it)
        if it == opts.max_iter:
            break
        jac_c = sp.diags(keep) @ jac + sp.diags(1.0 - keep)
        if system.n_dof < 600:
            du = np.linalg.solve(jac_c.toarray(), -res)
        else:
            du = spla.splu(jac_c.tocsc()).solve(-res)
        u += du
        du_norm = np.linalg.norm(du)
    raise NewtonError(
        f"Newton did not converge in {opts.max_iter} iterations at t={t:g} "
        f"(residual {norm:.3e}, initial {r0:.3e})"
    )


def advance_step(system, u_n, t0, t1, options=None, _depth=0):
    """Advance one backward-Euler step, halving the step on Newton failure."""
    opts = options or NewtonOptions()
    try:
        result = newton_solve(system, u_n, u_n, t1 - t0, t1, opts)
    except NewtonError:
        if _depth >= opts.max_halvings:
            raise
        tm = 0.5 * (t0 + t1)
        mid = advance_step(system, u_n, t0, tm, opts, _depth + 1)
        if hasattr(system, "commit"):
            system.commit(mid.u, tm, tm - t0)
        return advance_step(system, mid.u, tm, t1, opts, _depth + 1)
    return result


def run_transient(system, u0, times, options=None, observer=None):
    """March backward Euler over the given time grid.

    ``times`` includes the initial instant; ``observer(step, t, result)`` is
    called after every accepted top-level step.  Returns the final state.
    """
    opts = options or NewtonOptions()
    u = np.array(u0, dtype=float, copy=True)
    for k in range(1, len(times)):
        result = advance_step(system, u, times[k - 1], times[k], opts)
        u = result.u
        if hasattr(system, "commit"):
            system.commit(u, times[k], times[k] - times[k - 1])
        if observer is not None:
            observer(k, times[k], result)
    return u


def solve_steady(system, u0, t, options=None):
    """Solve the steady problem (transient term dropped) at pseudo-time t."""
    return newton_solve(system, u0, None, None, t, options or NewtonOptions())
