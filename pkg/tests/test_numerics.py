import numpy as np
import pytest
import scipy.sparse as sp

from latflow.numerics import (
    NewtonOptions,
    RandomStream,
    SolverError,
    SparseSymmetric,
    lognormal,
    newton_solve,
    solve_spd,
)


def laplacian_1d(n):
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def test_identity_system():
    b = np.array([3.0, -1.0, 2.5])
    x, _ = solve_spd(sp.eye(3).tocsr(), b)
    np.testing.assert_allclose(x, b, rtol=1e-14)


def test_small_spd_matches_dense_solve():
    rng = np.random.default_rng(0)
    a = rng.standard_normal((5, 5))
    mat = a @ a.T + 5.0 * np.eye(5)       # diagonally dominated SPD
    b = rng.standard_normal(5)
    x, info = solve_spd(sp.csr_matrix(mat), b)
    np.testing.assert_allclose(x, np.linalg.solve(mat, b), rtol=1e-12)
    assert info["method"] == "dense"


def test_zero_rhs_returns_zero():
    x, info = solve_spd(laplacian_1d(10) + sp.eye(10), np.zeros(10))
    assert np.all(x == 0.0)
    assert info["iterations"] == 0


def test_pcg_reaches_tolerance_on_large_system():
    n = 800
    mat = laplacian_1d(n) + 0.01 * sp.eye(n)
    rng = np.random.default_rng(1)
    b = rng.standard_normal(n)
    x, info = solve_spd(mat, b, tol=1e-12)
    assert info["method"] == "pcg"
    assert np.linalg.norm(mat @ x - b) <= 1e-12 * np.linalg.norm(b)


def test_pcg_energy_norm_error_decreases_monotonically():
    n = 700
    mat = (laplacian_1d(n) + 0.05 * sp.eye(n)).tocsr()
    rng = np.random.default_rng(2)
    b = rng.standard_normal(n)
    x_ref = np.linalg.solve(mat.toarray(), b)
    _, info = solve_spd(mat, b, tol=1e-10, collect_iterates=True)
    errs = [np.sqrt((x - x_ref) @ (mat @ (x - x_ref))) for x in info["iterates"]]
    diffs = np.diff(errs)
    assert np.all(diffs <= 1e-9 * errs[0])


def test_pcg_iteration_cap_raises():
    n = 600
    mat = laplacian_1d(n) + 1e-8 * sp.eye(n)
    b = np.ones(n)
    with pytest.raises(SolverError):
        solve_spd(mat, b, tol=1e-15, max_iter=3)


def test_sparse_symmetric_rejects_asymmetry():
    with pytest.raises(ValueError):
        SparseSymmetric.from_triplets(2, [0, 1], [1, 0], [1.0, 2.0])


def test_sparse_symmetric_prunes_cancelled_entries():
    # a self-contact scatters k, k, -k, -k onto the same slot
    op = SparseSymmetric.from_triplets(2, [0, 0, 0, 0, 1], [0, 0, 0, 0, 1],
                                       [1.0, 1.0, -1.0, -1.0, 2.0])
    assert op.matrix.nnz == 1


def test_random_stream_counter_resumes_sequence():
    s1 = RandomStream(seed=42)
    first = s1.uniform(size=5)
    rest = s1.uniform(size=3)
    s2 = RandomStream(seed=42, counter=5)
    np.testing.assert_array_equal(rest, s2.uniform(size=3))
    assert s1.counter == 8
    np.testing.assert_array_equal(first, RandomStream(seed=42).uniform(size=5))


def test_lognormal_cov_zero_is_exact_mean():
    s = RandomStream(seed=0)
    assert lognormal(s, 3.5, 0.0) == 3.5
    np.testing.assert_array_equal(lognormal(s, 3.5, 0.0, size=4), np.full(4, 3.5))


def test_lognormal_sample_statistics():
    s = RandomStream(seed=123)
    draws = lognormal(s, 5.618e-12, 0.2, size=100_000)
    assert np.all(draws > 0.0)
    assert abs(draws.mean() - 5.618e-12) <= 0.005 * 5.618e-12
    cv = draws.std(ddof=1) / draws.mean()
    assert abs(cv - 0.2) <= 0.02 * 0.2


class _LinearSystem:
    """du/dt-free linear model problem for the Newton driver."""

    def __init__(self, n=6):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((n, n))
        self.mat = sp.csr_matrix(a @ a.T + n * np.eye(n))
        self.rhs = rng.standard_normal(n)
        self.n_dof = n

    def residual_jacobian(self, u, u_prev, dt):
        return self.mat @ u - self.rhs, self.mat

    def dirichlet(self, t):
        return np.array([0], dtype=int), np.array([1.0])


def test_newton_linear_problem_converges_in_one_iteration():
    sys_ = _LinearSystem()
    res = newton_solve(sys_, np.zeros(sys_.n_dof), None, None, 0.0,
                       NewtonOptions(tol=1e-10))
    assert res.iterations == 1
    assert res.u[0] == 1.0
