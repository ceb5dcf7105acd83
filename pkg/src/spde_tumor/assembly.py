"""Sparse Q1 finite-element operators.

Weights (mobility, growth function, ...) are given as nodal vectors and
interpolated bilinearly to the 2x2 Gauss points. Assembly is split into a
symbolic phase (CSR pattern plus a scatter map, cached per grid) and a
numeric phase that sums element contributions with ``np.bincount``, whose
accumulation order is fixed.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .mesh import Grid, reference_tables


@dataclass(frozen=True)
class Pattern:
    indptr: np.ndarray
    indices: np.ndarray
    scatter: np.ndarray  # (E*16,) position in data of each (e, a, b) entry
    nnz: int


@lru_cache(maxsize=32)
def pattern(grid: Grid) -> Pattern:
    conn = grid.elements
    n = grid.n_nodes
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    keys = rows.astype(np.int64) * n + cols
    uniq, inverse = np.unique(keys, return_inverse=True)
    urows = uniq // n
    indices = (uniq % n).astype(np.int32)
    indptr = np.zeros(n + 1, dtype=np.int32)
    np.cumsum(np.bincount(urows, minlength=n), out=indptr[1:])
    return Pattern(indptr, indices, inverse.ravel(), len(uniq))


@lru_cache(maxsize=32)
def _tables(grid: Grid):
    return reference_tables(grid.hx, grid.hy)


def _to_csr(grid: Grid, elem: np.ndarray) -> sp.csr_matrix:
    pat = pattern(grid)
    data = np.bincount(pat.scatter, weights=elem.ravel(), minlength=pat.nnz)
    n = grid.n_nodes
    return sp.csr_matrix((data, pat.indices.copy(), pat.indptr.copy()), shape=(n, n))


def _check_nodal(grid: Grid, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.n_nodes,):
        raise ValueError(f"nodal field has shape {w.shape}, expected ({grid.n_nodes},)")
    return w


def _weight_at_quadrature(grid: Grid, w: np.ndarray) -> np.ndarray:
    B, _, _ = _tables(grid)
    return w[grid.elements] @ B.T  # (E, q)


def element_mass(grid: Grid, wq: np.ndarray | None = None) -> np.ndarray:
    B, _, wts = _tables(grid)
    if wq is None:
        me = np.einsum("q,qa,qb->ab", wts, B, B)
        return np.broadcast_to(me, (grid.n_elements, 4, 4))
    return np.einsum("eq,q,qa,qb->eab", wq, wts, B, B)


def element_stiffness(grid: Grid, wq: np.ndarray | None = None) -> np.ndarray:
    _, D, wts = _tables(grid)
    if wq is None:
        ke = np.einsum("q,qad,qbd->ab", wts, D, D)
        return np.broadcast_to(ke, (grid.n_elements, 4, 4))
    return np.einsum("eq,q,qad,qbd->eab", wq, wts, D, D)


def assemble_mass(grid: Grid, lumped: bool = False) -> sp.csr_matrix:
    """Consistent mass matrix ``[(w_i, w_j)]``; row-sum lumped if requested."""
    M = _to_csr(grid, element_mass(grid))
    if lumped:
        return sp.diags(np.asarray(M.sum(axis=1)).ravel(), format="csr")
    return M


def assemble_stiffness(grid: Grid) -> sp.csr_matrix:
    return _to_csr(grid, element_stiffness(grid))


def assemble_weighted_mass(grid: Grid, w) -> sp.csr_matrix:
    w = _check_nodal(grid, w)
    return _to_csr(grid, element_mass(grid, _weight_at_quadrature(grid, w)))


def assemble_weighted_stiffness(grid: Grid, w) -> sp.csr_matrix:
    w = _check_nodal(grid, w)
    return _to_csr(grid, element_stiffness(grid, _weight_at_quadrature(grid, w)))


def load_vector(grid: Grid, g, M: sp.spmatrix | None = None) -> np.ndarray:
    """``[(I g, w_j)]`` for the nodal interpolant ``I g``, i.e. ``M @ g``."""
    g = _check_nodal(grid, g)
    if M is None:
        M = assemble_mass(grid)
    return M @ g
