"""Sparse kernels and the per-step linear solver."""
from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10


class NonConvergence(RuntimeError):
    """Linear solve failed to reach the requested residual."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


def spmv(A: sp.spmatrix, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (A.shape[1],):
        raise ValueError(f"dimension mismatch: matrix has {A.shape[1]} columns, vector has shape {x.shape}")
    return A @ x


def residual_norm(A, x, b) -> float:
    return float(np.linalg.norm(A @ x - b))


def _bound(b: np.ndarray, tol: float) -> float:
    return tol * max(float(np.linalg.norm(b)), np.finfo(float).tiny)


def _check(A, x, b, tol, what):
    res = residual_norm(A, x, b)
    bound = _bound(b, tol)
    if not np.all(np.isfinite(x)) or not res <= bound:
        raise NonConvergence(f"{what} residual {res:.3e} exceeds bound {bound:.3e}", residual=res)
    return x


class Factorization:
    """Sparse LU of ``A`` after a symmetric permutation ``perm``.

    The permutation is applied outside SuperLU, which then runs without
    its own column ordering.
    """

    def __init__(self, A: sp.spmatrix, perm: np.ndarray | None = None):
        n = A.shape[0]
        if perm is None:
            self.perm = None
            self.lu = spla.splu(sp.csc_matrix(A), permc_spec="COLAMD")
        else:
            self.perm = np.asarray(perm)
            Ap = sp.csr_matrix(A)[self.perm][:, self.perm]
            self.lu = spla.splu(sp.csc_matrix(Ap), permc_spec="NATURAL")
        self.shape = (n, n)

    def solve(self, b: np.ndarray) -> np.ndarray:
        if self.perm is None:
            return self.lu.solve(b)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        return x


def _direct(A, b, perm=None):
    A = sp.csc_matrix(A)
    if A.shape[0] <= 2000 and A.nnz > 0.3 * A.shape[0] ** 2:
        return np.linalg.solve(A.toarray(), b)
    return Factorization(A, perm).solve(b)


def solve(A: sp.spmatrix, b, tol: float = DEFAULT_TOL, max_iter: int | None = None,
          method: str = "direct", restart: int = 50) -> np.ndarray:
    """Solve ``A x = b`` and enforce ``||A x - b|| <= tol * max(||b||, tiny)``.

    ``method="direct"`` uses sparse LU (SuperLU); ``"gmres"`` runs restarted
    GMRES with a Jacobi preconditioner. Either way the residual is
    re-checked and :class:`NonConvergence` raised if it is too large.
    """
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if not tol > 0:
        raise ValueError("tol must be positive")
    b = np.asarray(b, dtype=float)
    if b.shape != (A.shape[0],):
        raise ValueError("right-hand side has wrong length")
    n = A.shape[0]

    if method == "direct":
        try:
            x = _direct(A, b)
        except (RuntimeError, np.linalg.LinAlgError) as exc:  # exactly singular
            raise NonConvergence(f"direct solve failed: {exc}") from exc
    elif method == "gmres":
        if max_iter is None:
            max_iter = 10 * n
        d = A.diagonal()
        d = np.where(d != 0.0, d, 1.0)
        P = spla.LinearOperator(A.shape, matvec=lambda v: v / d, dtype=float)
        x, _info = spla.gmres(A, b, rtol=tol, atol=0.0, restart=restart,
                              maxiter=max(1, max_iter // restart), M=P)
    else:
        raise ValueError(f"unknown solver method {method!r}")
    return _check(A, x, b, tol, method)


class StepSolver:
    """Solver for a sequence of slowly varying systems.

    ``method="lagged"`` keeps the LU factors of an earlier matrix and uses
    them to precondition GMRES; the factors are refreshed whenever GMRES
    needs more than ``max_krylov`` iterations. ``"direct"`` and
    ``"gmres"`` forward to :func:`solve` for every system.

    All decisions depend only on the sequence of inputs, so repeated runs
    are bit-identical.
    """

    def __init__(self, method: str = "lagged", tol: float = DEFAULT_TOL,
                 perm: np.ndarray | None = None, max_krylov: int = 12):
        if method not in ("lagged", "direct", "gmres"):
            raise ValueError(f"unknown solver method {method!r}")
        self.method = method
        self.tol = tol
        self.perm = perm
        self.max_krylov = max_krylov
        self.factor: Factorization | None = None
        self.n_factorizations = 0
        self.krylov_iterations = 0

    def _refactor(self, A):
        self.factor = Factorization(A, self.perm)
        self.n_factorizations += 1

    def solve(self, A: sp.spmatrix, b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if self.method == "gmres":
            return solve(A, b, tol=self.tol, method="gmres")
        if self.method == "direct":
            try:
                x = Factorization(A, self.perm).solve(b)
            except RuntimeError as exc:
                raise NonConvergence(f"factorization failed: {exc}") from exc
            self.n_factorizations += 1
            return _check(A, x, b, self.tol, "direct")
        if self.factor is not None:
            x = self._krylov(A, b)
            if x is not None:
                return x
        try:
            self._refactor(A)
        except RuntimeError as exc:
            raise NonConvergence(f"factorization failed: {exc}") from exc
        x = self.factor.solve(b)
        # one refinement sweep keeps the residual well inside the bound
        x = x + self.factor.solve(b - A @ x)
        return _check(A, x, b, self.tol, "lagged LU")

    def _krylov(self, A, b):
        P = spla.LinearOperator(A.shape, matvec=self.factor.solve, dtype=float)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.gmres(A, b, x0=self.factor.solve(b), rtol=0.01 * self.tol, atol=0.0,
                             restart=self.max_krylov, maxiter=1, M=P, callback=cb,
                             callback_type="pr_norm")
        self.krylov_iterations += count[0]
        if info != 0 or not residual_norm(A, x, b) <= _bound(b, self.tol):
            return None
        return x


def nested_dissection(nx: int, ny: int, leaf: int = 16) -> np.ndarray:
    """Nested-dissection ordering of the nodes of an ``(nx+1) x (ny+1)`` grid.

    Returns node ids (``j*(nx+1) + i``) in elimination order: the two halves
    first, the separating grid line last, recursively.
    """
    out: list[np.ndarray] = []

    def rec(i0, i1, j0, j1):
        ni, nj = i1 - i0 + 1, j1 - j0 + 1
        if ni <= 0 or nj <= 0:
            return
        if ni * nj <= leaf:
            jj, ii = np.mgrid[j0:j1 + 1, i0:i1 + 1]
            out.append((jj * (nx + 1) + ii).ravel())
            return
        if ni >= nj:
            m = (i0 + i1) // 2
            rec(i0, m - 1, j0, j1)
            rec(m + 1, i1, j0, j1)
            out.append(np.arange(j0, j1 + 1) * (nx + 1) + m)
        else:
            m = (j0 + j1) // 2
            rec(i0, i1, j0, m - 1)
            rec(i0, i1, m + 1, j1)
            out.append(m * (nx + 1) + np.arange(i0, i1 + 1))

    rec(0, nx, 0, ny)
    return np.concatenate(out)


def block_interleave(order: np.ndarray, n_nodes: int, n_fields: int) -> np.ndarray:
    """Expand a node ordering to fields stored as consecutive blocks of length
    ``n_nodes``, keeping the unknowns of one node together."""
    return (order[:, None] + n_nodes * np.arange(n_fields)[None, :]).ravel()
