"""Quantities of interest, Ginzburg-Landau energy, 0.5-contours and file export."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .assembly import _tables
from .constitutive import psi
from .mesh import Grid


def field_integral(grid: Grid, M, u) -> float:
    """Exact integral of the Q1 interpolant, ``1^T M u``."""
    u = np.asarray(u, dtype=float)
    if u.shape != (grid.n_nodes,):
        raise ValueError(f"nodal field has shape {u.shape}, expected ({grid.n_nodes},)")
    return float(np.asarray(M.sum(axis=0)).ravel() @ u)


@dataclass(frozen=True)
class EnergyParts:
    gradient: float
    potential: float
    nutrient: float
    coupling: float

    @property
    def total(self) -> float:
        return self.gradient + self.potential + self.nutrient + self.coupling


def energy_parts(grid: Grid, phi, sigma, epsilon: float, chi: float) -> EnergyParts:
    """Ginzburg-Landau energy integrated with the 2x2 Gauss rule per element.

    ``coupling`` is the ``-chi phi sigma`` term; the other three parts are
    nonnegative.
    """
    B, D, w = _tables(grid)
    conn = grid.elements
    pe = np.asarray(phi, dtype=float)[conn]  # (E, 4)
    se = np.asarray(sigma, dtype=float)[conn]
    pq = pe @ B.T  # (E, q)
    sq = se @ B.T
    grad = np.einsum("ea,qad->eqd", pe, D)
    g2 = np.sum(grad * grad, axis=2)
    return EnergyParts(
        gradient=float(0.5 * epsilon**2 * np.sum(g2 @ w)),
        potential=float(np.sum(psi(pq) @ w)),
        nutrient=float(0.5 * np.sum((sq * sq) @ w)),
        coupling=float(-chi * np.sum((pq * sq) @ w)),
    )


def energy(grid: Grid, phi, sigma, params) -> float:
    return energy_parts(grid, phi, sigma, params.epsilon, params.chi).total


# --------------------------------------------------------------------------
# marching squares
# --------------------------------------------------------------------------


@dataclass
class Contour:
    level: float
    polylines: list[np.ndarray]  # each (n_pts, 2)

    @property
    def perimeter(self) -> float:
        return float(sum(np.sum(np.linalg.norm(np.diff(p, axis=0), axis=1)) for p in self.polylines))

    @property
    def n_segments(self) -> int:
        return sum(len(p) - 1 for p in self.polylines)


# cell edges in local order: 0 bottom (c0-c1), 1 right (c1-c2), 2 top (c3-c2), 3 left (c0-c3)
# case index bits: c0 -> 1, c1 -> 2, c2 -> 4, c3 -> 8 (bit set when value >= level)
_SEGMENTS = {
    0: [], 15: [],
    1: [(3, 0)], 14: [(0, 3)],
    2: [(0, 1)], 13: [(1, 0)],
    3: [(3, 1)], 12: [(1, 3)],
    4: [(1, 2)], 11: [(2, 1)],
    6: [(0, 2)], 9: [(2, 0)],
    7: [(3, 2)], 8: [(2, 3)],
}
# saddles: (center below level, center above level)
_SADDLES = {
    5: ([(3, 0), (1, 2)], [(3, 2), (1, 0)]),
    10: ([(0, 1), (2, 3)], [(0, 3), (2, 1)]),
}


def extract_contour(grid: Grid, u, level: float) -> Contour:
    """Isoline ``u = level`` by marching squares.

    Crossings are linearly interpolated along cell edges; an edge crosses
    when exactly one endpoint is ``>= level``. Ambiguous saddle cells are
    resolved with the average of the four corner values. Segments are
    chained into polylines through shared edge crossings.
    """
    if not np.isfinite(level):
        raise ValueError("level must be finite")
    U = grid.to_array(u)
    nx, ny, hx, hy = grid.nx, grid.ny, grid.hx, grid.hy
    above = U >= level

    # crossing points on horizontal edges (i,j)-(i+1,j) and vertical edges (i,j)-(i,j+1)
    def hpoint(i, j):
        a, b = U[j, i], U[j, i + 1]
        t = (level - a) / (b - a)
        return ((i + t) * hx, j * hy)

    def vpoint(i, j):
        a, b = U[j, i], U[j + 1, i]
        t = (level - a) / (b - a)
        return (i * hx, (j + t) * hy)

    def edge_key(i, j, e):
        if e == 0:
            return ("h", i, j)
        if e == 2:
            return ("h", i, j + 1)
        if e == 3:
            return ("v", i, j)
        return ("v", i + 1, j)

    idx = (above[:-1, :-1].astype(int) | (above[:-1, 1:] << 1) | (above[1:, 1:] << 2)
           | (above[1:, :-1] << 3))
    segments = []
    for j, i in zip(*np.nonzero((idx != 0) & (idx != 15))):
        case = int(idx[j, i])
        if case in _SADDLES:
            centre = 0.25 * (U[j, i] + U[j, i + 1] + U[j + 1, i + 1] + U[j + 1, i])
            segs = _SADDLES[case][1 if centre >= level else 0]
        else:
            segs = _SEGMENTS[case]
        for ea, eb in segs:
            segments.append((edge_key(i, j, ea), edge_key(i, j, eb)))

    points = {}
    for seg in segments:
        for key in seg:
            if key not in points:
                kind, i, j = key
                points[key] = hpoint(i, j) if kind == "h" else vpoint(i, j)

    return Contour(level, [np.array([points[k] for k in chain]) for chain in _chain(segments)])


def _chain(segments):
    """Join directed segments sharing endpoint keys into maximal chains."""
    nbrs: dict = {}
    for a, b in segments:
        nbrs.setdefault(a, []).append(b)
        nbrs.setdefault(b, []).append(a)
    used = set()
    chains = []

    def walk(start):
        chain = [start]
        cur = start
        while True:
            nxt = None
            for cand in nbrs[cur]:
                edge = frozenset((cur, cand))
                if edge not in used:
                    nxt = cand
                    used.add(edge)
                    break
            if nxt is None:
                return chain
            chain.append(nxt)
            cur = nxt
            if cur == start:
                return chain

    # open chains first (start at degree-1 endpoints), then closed loops
    for key in nbrs:
        if len(nbrs[key]) == 1 and any(frozenset((key, c)) not in used for c in nbrs[key]):
            chains.append(walk(key))
    for a, b in segments:
        if frozenset((a, b)) not in used:
            chains.append(walk(a))
    return chains


def contour_perimeter(grid: Grid, u, level: float = 0.5) -> float:
    return extract_contour(grid, u, level).perimeter


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def write_csv_timeseries(path, times: Sequence[float], columns: Mapping[str, Sequence[float]]) -> None:
    """CSV with header ``time,<col>,...`` and ``%.17g`` values."""
    path = Path(path)
    times = np.asarray(times, dtype=float)
    cols = {k: np.asarray(v, dtype=float) for k, v in columns.items()}
    for name, v in cols.items():
        if v.shape != times.shape:
            raise ValueError(f"column {name!r} has {v.shape[0]} rows, expected {times.shape[0]}")
    try:
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(["time", *cols]) + "\n")
            for k, t in enumerate(times):
                fh.write(",".join("%.17g" % x for x in [t, *(v[k] for v in cols.values())]) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def read_csv_timeseries(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(x) for x in r] for r in reader]
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    return {name: data[:, k] for k, name in enumerate(header)}


def write_contour_csv(path, contour: Contour) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("polyline,x,y\n")
        for k, line in enumerate(contour.polylines):
            for x, y in line:
                fh.write(f"{k},{x:.17g},{y:.17g}\n")


VTK_HEADER = "# vtk DataFile Version 3.0"


def write_vtk_field(path, grid: Grid, fields: Mapping[str, Sequence[float]],
                    title: str = "spde_tumor fields") -> None:
    """Legacy ASCII STRUCTURED_POINTS file with one scalar array per field."""
    path = Path(path)
    lines = [
        VTK_HEADER,
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
        "ORIGIN 0 0 0",
        f"SPACING {grid.hx:.17g} {grid.hy:.17g} 1",
        f"POINT_DATA {grid.n_nodes}",
    ]
    for name, values in fields.items():
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.n_nodes,):
            raise ValueError(f"field {name!r} has wrong length")
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend("%.17g" % v for v in values)
    try:
        path.write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
