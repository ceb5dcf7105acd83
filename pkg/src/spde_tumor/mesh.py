"""Uniform rectangular grid with bilinear (Q1) elements.

Node ``(i, j)`` has id ``j*(nx+1) + i``. Element ``e = ey*nx + ex`` lists
its corners counterclockwise from the lower-left node::

    3 ---- 2
    |      |
    0 ---- 1

All assembly code relies on this local ordering.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# local corner signs on the reference square [-1, 1]^2, counterclockwise
_XI_SIGN = np.array([-1.0, 1.0, 1.0, -1.0])
_ETA_SIGN = np.array([-1.0, -1.0, 1.0, 1.0])


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise ValueError(f"element counts must be positive integers, got ({self.nx}, {self.ny})")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError(f"domain extents must be positive, got ({self.lx}, {self.ly})")

    @property
    def hx(self) -> float:
        return self.lx / self.nx

    @property
    def hy(self) -> float:
        return self.ly / self.ny

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @property
    def n_elements(self) -> int:
        return self.nx * self.ny

    def node_id(self, i, j):
        return j * (self.nx + 1) + i

    @cached_property
    def coords(self) -> np.ndarray:
        """(N, 2) array of node coordinates."""
        i = np.arange(self.nx + 1)
        j = np.arange(self.ny + 1)
        ii, jj = np.meshgrid(i, j)
        return np.column_stack([ii.ravel() * self.hx, jj.ravel() * self.hy])

    @cached_property
    def elements(self) -> np.ndarray:
        """(E, 4) array of corner node ids, counterclockwise."""
        ex, ey = np.meshgrid(np.arange(self.nx), np.arange(self.ny))
        ex = ex.ravel()
        ey = ey.ravel()
        ll = ey * (self.nx + 1) + ex
        return np.column_stack([ll, ll + 1, ll + self.nx + 2, ll + self.nx + 1])

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        i, j = self.coords_index
        mask = (i == 0) | (i == self.nx) | (j == 0) | (j == self.ny)
        return np.flatnonzero(mask)

    @cached_property
    def coords_index(self) -> tuple[np.ndarray, np.ndarray]:
        ids = np.arange(self.n_nodes)
        return ids % (self.nx + 1), ids // (self.nx + 1)

    def to_array(self, u: np.ndarray) -> np.ndarray:
        """Reshape a nodal vector to ``(ny+1, nx+1)``, row index j."""
        return np.asarray(u).reshape(self.ny + 1, self.nx + 1)

    def interpolate(self, func) -> np.ndarray:
        """Nodal interpolant of ``func(x, y)``."""
        return np.asarray(func(self.coords[:, 0], self.coords[:, 1]), dtype=float)


def build_grid(nx: int, ny: int, lx: float = 1.0, ly: float = 1.0) -> Grid:
    return Grid(nx, ny, lx, ly)


def shape_values(xi, eta) -> np.ndarray:
    return 0.25 * (1.0 + _XI_SIGN * xi) * (1.0 + _ETA_SIGN * eta)


def shape_gradients(xi, eta, hx: float, hy: float) -> np.ndarray:
    """(4, 2) physical gradients of the local basis at a reference point."""
    dxi = 0.25 * _XI_SIGN * (1.0 + _ETA_SIGN * eta)
    deta = 0.25 * _ETA_SIGN * (1.0 + _XI_SIGN * xi)
    return np.column_stack([dxi * (2.0 / hx), deta * (2.0 / hy)])


def gauss_points_2x2() -> list[tuple[tuple[float, float], float]]:
    g = 1.0 / np.sqrt(3.0)
    return [((xi, eta), 1.0) for eta in (-g, g) for xi in (-g, g)]


def reference_tables(hx: float, hy: float):
    """Shape values ``B[q, a]``, gradients ``D[q, a, :]`` and weights ``w[q]``
    at the 2x2 Gauss points; weights include the Jacobian ``hx*hy/4``."""
    pts = gauss_points_2x2()
    B = np.array([shape_values(xi, eta) for (xi, eta), _ in pts])
    D = np.array([shape_gradients(xi, eta, hx, hy) for (xi, eta), _ in pts])
    w = np.array([wt for _, wt in pts]) * (hx * hy / 4.0)
    return B, D, w
