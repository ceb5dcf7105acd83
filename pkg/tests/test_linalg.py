import numpy as np
import pytest
import scipy.sparse as sp

from spde_tumor.linalg import (
    NonConvergence,
    StepSolver,
    block_interleave,
    nested_dissection,
    residual_norm,
    solve,
    spmv,
)


def poisson(n):
    T = sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n))
    I = sp.identity(n)
    return (sp.kron(I, T) + sp.kron(T, I) + 0.1 * sp.identity(n * n)).tocsr()


class TestSpmv:
    def test_matches_dense(self, rng):
        A = sp.random(20, 15, density=0.3, random_state=1, format="csr")
        x = rng.standard_normal(15)
        np.testing.assert_allclose(spmv(A, x), A.toarray() @ x)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            spmv(sp.identity(3, format="csr"), np.ones(4))


class TestSolve:
    @pytest.mark.parametrize("method", ["direct", "gmres"])
    def test_residual_contract(self, method, rng):
        A = poisson(12)
        b = rng.standard_normal(A.shape[0])
        x = solve(A, b, tol=1e-10, method=method)
        assert residual_norm(A, x, b) <= 1e-10 * np.linalg.norm(b)

    def test_nonsymmetric(self, rng):
        A = poisson(10) + sp.diags(np.ones(99), 1, shape=(100, 100))
        b = rng.standard_normal(100)
        x = solve(A, b)
        assert residual_norm(A, x, b) <= 1e-10 * np.linalg.norm(b)

    def test_gmres_iteration_cap(self, rng):
        A = poisson(20)
        b = rng.standard_normal(A.shape[0])
        with pytest.raises(NonConvergence) as info:
            solve(A, b, tol=1e-14, method="gmres", max_iter=5, restart=5)
        assert info.value.residual > 0

    def test_singular_raises(self):
        A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(NonConvergence):
            solve(A, np.array([1.0, 0.0]))

    def test_zero_rhs(self):
        x = solve(poisson(4), np.zeros(16))
        np.testing.assert_array_equal(x, 0.0)

    @pytest.mark.parametrize("bad", [dict(tol=0.0), dict(method="cg")])
    def test_bad_arguments(self, bad):
        with pytest.raises(ValueError):
            solve(poisson(3), np.ones(9), **bad)


class TestStepSolver:
    def test_lagged_reuses_factorization(self, rng):
        A = poisson(15)
        s = StepSolver("lagged", tol=1e-10)
        for k in range(5):
            Ak = A + 1e-4 * k * sp.identity(A.shape[0])
            b = rng.standard_normal(A.shape[0])
            x = s.solve(Ak, b)
            assert residual_norm(Ak, x, b) <= 1e-10 * np.linalg.norm(b)
        assert s.n_factorizations == 1
        assert s.krylov_iterations > 0

    def test_lagged_refactors_on_large_change(self, rng):
        A = poisson(10)
        s = StepSolver("lagged", tol=1e-10, max_krylov=2)
        s.solve(A, rng.standard_normal(100))
        B = A + sp.diags(rng.uniform(0, 50, 100))
        b = rng.standard_normal(100)
        x = s.solve(B, b)
        assert s.n_factorizations == 2
        assert residual_norm(B, x, b) <= 1e-10 * np.linalg.norm(b)

    @pytest.mark.parametrize("method", ["direct", "lagged"])
    def test_permuted_factorization(self, method, rng):
        n = 6
        A1 = poisson(n + 1)
        A = sp.block_diag([A1, A1, A1]).tocsr() + sp.random(3 * (n + 1) ** 2, 3 * (n + 1) ** 2,
                                                            density=0.01, random_state=2)
        perm = block_interleave(nested_dissection(n, n), (n + 1) ** 2, 3)
        b = rng.standard_normal(A.shape[0])
        x = StepSolver(method, perm=perm).solve(A, b)
        assert residual_norm(A, x, b) <= 1e-10 * np.linalg.norm(b)

    def test_repeatable(self, rng):
        A = poisson(12)
        bs = [rng.standard_normal(A.shape[0]) for _ in range(3)]
        runs = []
        for _ in range(2):
            s = StepSolver("lagged")
            runs.append([s.solve(A + 0.01 * k * sp.identity(A.shape[0]), b) for k, b in enumerate(bs)])
        for x, y in zip(*runs):
            assert np.array_equal(x, y)

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            StepSolver("cholesky")


class TestOrdering:
    @pytest.mark.parametrize("nx,ny", [(1, 1), (4, 4), (7, 3), (50, 50)])
    def test_nested_dissection_is_permutation(self, nx, ny):
        order = nested_dissection(nx, ny)
        np.testing.assert_array_equal(np.sort(order), np.arange((nx + 1) * (ny + 1)))

    def test_interleave(self):
        np.testing.assert_array_equal(block_interleave(np.array([1, 0]), 2, 3), [1, 3, 5, 0, 2, 4])
