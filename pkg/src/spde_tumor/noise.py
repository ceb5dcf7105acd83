"""Seedable Wiener increments and noise load vectors.

Normals come from inverse-CDF sampling (``scipy.special.ndtri``) of
uniforms built from the raw 64-bit output of the counter-based Philox
generator: ``u = ((raw >> 12) + 0.5) * 2**-52``, which lies strictly in
(0, 1). One raw word is consumed per normal, so the stream position only
depends on how many normals were requested.

Per time step the stepper draws N normals for the tumor equation, then N
for the nutrient equation (node index ascending), independent of the
noise amplitudes. Runs with the same seed and different ``nu`` therefore
see bit-identical Gaussian sequences.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .mesh import Grid

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_sample_seed(base_seed: int, sample_index: int) -> int:
    """Per-sample seed: splitmix64 finalizer of ``base ^ (index+1)*golden``."""
    return splitmix64((base_seed & MASK64) ^ (((sample_index + 1) * GOLDEN_GAMMA) & MASK64))


class RngStream:
    """Single-owner stream of standard normals.

    ``digest`` is a running SHA-256 over every normal drawn (as
    little-endian float64), used to compare noise sequences between runs.
    Set ``record=True`` to also keep the drawn arrays.
    """

    algorithm = "philox4x64-ndtri"

    def __init__(self, seed: int, record: bool = False):
        self.seed = int(seed) & MASK64
        self._bitgen = np.random.Philox(key=self.seed)
        self._hash = hashlib.sha256()
        self.count = 0
        self.record = record
        self.records: list[np.ndarray] = []

    def normals(self, n: int) -> np.ndarray:
        raw = self._bitgen.random_raw(n)
        u = ((raw >> np.uint64(12)).astype(np.float64) + 0.5) * 2.0**-52
        z = ndtri(u)
        self._hash.update(z.astype("<f8").tobytes())
        self.count += n
        if self.record:
            self.records.append(z.copy())
        return z

    @property
    def digest(self) -> str:
        return self._hash.hexdigest()


def wiener_increment(rng: RngStream, n: int, dt: float) -> np.ndarray:
    """n independent N(0, dt) draws."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return np.sqrt(dt) * rng.normals(n)


@dataclass(eq=False)
class NoiseSpec:
    """Noise configuration.

    ``modes="nodal"`` uses one independent Brownian motion per node with
    variance ``q[k]``. ``modes="cosine"`` expands the noise in the Neumann
    cosine eigenfunctions with ``q = (1 + k^2 + l^2)^(-decay)``.
    """

    nu: float = 0.5
    sigma_amp: float = 1.0
    q: np.ndarray | None = None
    mass_project: bool = True
    modes: str = "nodal"
    decay: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.nu < 0 or self.sigma_amp < 0:
            raise ValueError("noise amplitudes must be nonnegative")
        if self.q is not None:
            self.q = np.asarray(self.q, dtype=float)
            if np.any(self.q < 0):
                raise ValueError("mode variances must be nonnegative")
        if self.modes not in ("nodal", "cosine"):
            raise ValueError(f"unknown noise modes {self.modes!r}")

    def mode_variances(self, grid: Grid) -> np.ndarray:
        if self.q is not None:
            if self.q.shape != (grid.n_nodes,):
                raise ValueError("q must have one entry per node")
            return self.q
        if self.modes == "nodal":
            return np.ones(grid.n_nodes)
        k = np.arange(grid.nx + 1)
        l = np.arange(grid.ny + 1)
        kk, ll = np.meshgrid(k, l)
        return ((1.0 + kk**2 + ll**2) ** (-self.decay)).ravel()

    def noise_field(self, grid: Grid, xi: np.ndarray) -> np.ndarray:
        """Nodal values of the truncated Wiener increment given mode draws xi."""
        sq = np.sqrt(self.mode_variances(grid))
        if self.modes == "nodal":
            return sq * xi
        cx, cy = self._cosine_tables(grid)
        coeff = grid.to_array(sq * xi)  # [l, k]
        return (cy @ coeff @ cx.T).ravel()

    def _cosine_tables(self, grid: Grid):
        key = (grid.nx, grid.ny, grid.lx, grid.ly)
        if key not in self._cache:
            def table(n, length):
                x = np.arange(n + 1) * (length / n)
                k = np.arange(n + 1)
                amp = np.where(k == 0, np.sqrt(1.0 / length), np.sqrt(2.0 / length))
                return amp[None, :] * np.cos(np.pi * np.outer(x, k) / length)
            self._cache[key] = (table(grid.nx, grid.lx), table(grid.ny, grid.ly))
        return self._cache[key]


def _check(grid: Grid, xi) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (grid.n_nodes,):
        raise ValueError(f"increment vector has shape {xi.shape}, expected ({grid.n_nodes},)")
    return xi


def noise_load_phi(grid: Grid, M, phi, spec: NoiseSpec, xi) -> np.ndarray:
    """Tumor-equation noise ``nu * phi_+ (1 - phi_+) * dW`` as a load vector."""
    xi = _check(grid, xi)
    p = np.clip(np.asarray(phi, dtype=float), 0.0, 1.0)
    v = spec.nu * p * (1.0 - p) * spec.noise_field(grid, xi)
    return M @ v if spec.mass_project else v


def noise_load_sigma(grid: Grid, M, spec: NoiseSpec, xi2) -> np.ndarray:
    """Additive nutrient noise ``sigma_amp * dW``."""
    xi2 = _check(grid, xi2)
    v = spec.sigma_amp * spec.noise_field(grid, xi2)
    return M @ v if spec.mass_project else v


def write_noise_dump(path, records: list[np.ndarray]) -> None:
    """CSV of raw standard normals: ``step,equation,node,xi``.

    ``records`` alternates tumor and nutrient draws per step as produced
    by the stepper.
    """
    with open(path, "w", newline="\n") as fh:
        fh.write("step,equation,node,xi\n")
        for idx, arr in enumerate(records):
            step, eq = divmod(idx, 2)
            name = "phi" if eq == 0 else "sigma"
            for k, val in enumerate(arr):
                fh.write(f"{step},{name},{k},{val:.17g}\n")
