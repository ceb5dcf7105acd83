"""Semi-implicit Euler-Maruyama time stepping of the tumor/nutrient system.

Unknowns per step are ``z = [phi, mu, sigma]`` at the new time level. With
weights frozen at the old level (``K1 = K[m1(phi_n)]``, ``K2 = K[m2(sigma_n)]``,
``Mf = M[f(phi_n)]``) one step solves::

    M phi + dt K1 mu - dt chi K1 sigma  = M phi_n + dt (beta Mf sigma_n - alpha M f(phi_n)) + noise_phi
    M mu - eps^2 K phi - 0.75 M phi     = M psi_e'(phi_n)
    M sigma + dt K2 sigma - dt chi K2 phi = M sigma_n - dt delta Mf sigma_n + noise_sigma

The 0.75 term is the implicit convex part of the potential derivative,
``psi_e'`` the explicit remainder. Dirichlet nutrient nodes get identity
rows.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import assembly
from .constitutive import (
    GrowthSpec,
    MobilitySpec,
    PotentialSpec,
    growth_f,
    initial_phi0,
    mobility,
    psi_prime,
    psi_split,
)
from .linalg import DEFAULT_TOL, NonConvergence, StepSolver, block_interleave, nested_dissection, solve
from .mesh import Grid
from .noise import NoiseSpec, RngStream, noise_load_phi, noise_load_sigma, wiener_increment

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    """A trajectory failed; carries the step index where it happened."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message if step is None else f"step {step}: {message}")
        self.step = step


@dataclass
class ModelParams:
    epsilon: float = 0.01
    chi: float = 5.0
    alpha: float = 1.0
    beta: float = 15.0
    delta: float = 100.0
    m1: MobilitySpec = field(default_factory=lambda: MobilitySpec("quartic_interface", 1e-16))
    m2: MobilitySpec = field(default_factory=lambda: MobilitySpec("constant", 10.0))
    f: GrowthSpec = field(default_factory=GrowthSpec)
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    # None -> homogeneous Neumann; a number -> Dirichlet value on the boundary
    sigma_dirichlet: float | None = 1.0
    dt: float = 0.01
    t_end: float = 1.0
    # numerics
    splitting: str = "convex"  # or "explicit": whole psi' at the old level
    scheme: str = "monolithic"  # or "decoupled"
    solver: str = "auto"  # "direct", "lagged" or "gmres"
    solver_tol: float = DEFAULT_TOL
    lumped_mass: bool = False
    # mobility weighting the chemotaxis cross term of the nutrient equation
    sigma_chemotaxis: str = "m1"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0:
            raise ValueError("t_end must be nonnegative")
        for name in ("chi", "alpha", "beta", "delta"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.splitting not in ("convex", "explicit"):
            raise ValueError(f"unknown splitting {self.splitting!r}")
        if self.sigma_chemotaxis not in ("m1", "m2"):
            raise ValueError(f"unknown sigma_chemotaxis weighting {self.sigma_chemotaxis!r}")
        if self.scheme not in ("monolithic", "decoupled"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.solver not in ("auto", "lagged", "direct", "gmres"):
            raise ValueError(f"unknown solver {self.solver!r}")
        if not self.solver_tol > 0:
            raise ValueError("solver_tol must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class State:
    t: float
    phi: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray

    def copy(self) -> "State":
        return State(self.t, self.phi.copy(), self.mu.copy(), self.sigma.copy())


@dataclass
class StepOperators:
    M: sp.csr_matrix
    K: sp.csr_matrix
    boundary: np.ndarray
    solver: StepSolver | None = None

    @classmethod
    def build(cls, grid: Grid, params: ModelParams) -> "StepOperators":
        # nested dissection with the three unknowns of a node kept together
        perm = block_interleave(nested_dissection(grid.nx, grid.ny), grid.n_nodes, 3)
        return cls(
            M=assembly.assemble_mass(grid, lumped=params.lumped_mass),
            K=assembly.assemble_stiffness(grid),
            boundary=grid.boundary_nodes,
            solver=StepSolver(resolve_solver(grid, params.solver), params.solver_tol, perm=perm),
        )

    def weighted_stiffness(self, grid: Grid, spec: MobilitySpec, u: np.ndarray):
        if spec.is_constant:
            return spec.value * self.K
        return assembly.assemble_weighted_stiffness(grid, mobility(u, spec))

    def weighted_mass(self, grid: Grid, w: np.ndarray, lumped: bool):
        if lumped:
            return sp.diags(self.M.diagonal() * w, format="csr")
        return assembly.assemble_weighted_mass(grid, w)


# above this many nodes refactoring every step costs more than a few
# lagged-preconditioned Krylov iterations
AUTO_LAGGED_NODES = 6000


def resolve_solver(grid: Grid, method: str) -> str:
    if method != "auto":
        return method
    return "lagged" if grid.n_nodes > AUTO_LAGGED_NODES else "direct"


def initialize(grid: Grid, params: ModelParams, phi0: Callable | np.ndarray | None = None,
               ops: StepOperators | None = None) -> State:
    """Initial state: interpolated tumor bump, zero nutrient (boundary set to
    the Dirichlet value), and the matching chemical potential."""
    ops = ops or StepOperators.build(grid, params)
    if phi0 is None:
        phi = grid.interpolate(initial_phi0)
    elif callable(phi0):
        phi = grid.interpolate(phi0)
    else:
        phi = np.array(phi0, dtype=float)
    sigma = np.zeros(grid.n_nodes)
    if params.sigma_dirichlet is not None:
        sigma[ops.boundary] = params.sigma_dirichlet
    rhs = params.epsilon**2 * (ops.K @ phi) + ops.M @ psi_prime(phi)
    mu = solve(ops.M, rhs, tol=1e-12)
    return State(0.0, phi, mu, sigma)


def _check_finite(state: State, step: int):
    for name in ("phi", "mu", "sigma"):
        if not np.all(np.isfinite(getattr(state, name))):
            raise SimulationError(f"non-finite values in {name}", step)


def assemble_step(state: State, ops: StepOperators, grid: Grid, params: ModelParams,
                  noise_phi: np.ndarray, noise_sigma: np.ndarray):
    """Block matrix and right-hand side of one step (before Dirichlet rows)."""
    M, K, dt = ops.M, ops.K, params.dt
    phi_n, sigma_n = state.phi, state.sigma
    K1 = ops.weighted_stiffness(grid, params.m1, phi_n)
    K2 = ops.weighted_stiffness(grid, params.m2, sigma_n)
    f_n = growth_f(phi_n, params.f)
    Mf = ops.weighted_mass(grid, f_n, params.lumped_mass)

    if params.splitting == "convex":
        expl, implicit = psi_split(phi_n)
    else:
        expl, implicit = psi_prime(phi_n), 0.0

    A = sp.bmat(
        [
            [M, dt * K1, -dt * params.chi * K1],
            [-(params.epsilon**2) * K - implicit * M, M, None],
            [-dt * params.chi * (K1 if params.sigma_chemotaxis == "m1" else K2), None, M + dt * K2],
        ],
        format="csr",
    )
    b1 = M @ phi_n + dt * (params.beta * (Mf @ sigma_n) - params.alpha * (M @ f_n)) + noise_phi
    b2 = M @ expl
    b3 = M @ sigma_n - dt * params.delta * (Mf @ sigma_n) + noise_sigma
    return A, np.concatenate([b1, b2, b3])


def apply_dirichlet(A: sp.csr_matrix, b: np.ndarray, rows: np.ndarray, value: float):
    """Replace ``rows`` by identity rows with right-hand side ``value``."""
    keep = np.ones(A.shape[0])
    keep[rows] = 0.0
    A = sp.diags(keep) @ A + sp.diags(1.0 - keep)
    b = b.copy()
    b[rows] = value
    return A.tocsr(), b


def step(state: State, ops: StepOperators, grid: Grid, params: ModelParams,
         rng: RngStream | None, step_index: int = 0) -> State:
    """Advance one time step. ``rng=None`` means no noise draws at all."""
    _check_finite(state, step_index)
    n = grid.n_nodes
    if rng is not None:
        xi1 = wiener_increment(rng, n, params.dt)
        xi2 = wiener_increment(rng, n, params.dt)
        g1 = noise_load_phi(grid, ops.M, state.phi, params.noise, xi1)
        g2 = noise_load_sigma(grid, ops.M, params.noise, xi2)
    else:
        g1 = g2 = np.zeros(n)

    A, b = assemble_step(state, ops, grid, params, g1, g2)
    if params.sigma_dirichlet is not None:
        A, b = apply_dirichlet(A, b, 2 * n + ops.boundary, params.sigma_dirichlet)

    try:
        if params.scheme == "monolithic":
            solver = ops.solver or StepSolver(resolve_solver(grid, params.solver), params.solver_tol)
            z = solver.solve(A, b)
        else:
            z = _decoupled_solve(A, b, state, n, params)
    except NonConvergence as exc:
        raise SimulationError(str(exc), step_index) from exc

    new = State(state.t + params.dt, z[:n], z[n:2 * n], z[2 * n:])
    _check_finite(new, step_index)
    return new


def _decoupled_solve(A, b, state: State, n: int, params: ModelParams,
                     tol: float = 1e-8, max_iter: int = 200) -> np.ndarray:
    """Block Gauss-Seidel between the (phi, mu) and sigma blocks."""
    A = A.tocsr()
    pm = slice(0, 2 * n)
    sg = slice(2 * n, 3 * n)
    A_pm, A_pm_s = A[pm, pm], A[pm, sg]
    A_s, A_s_pm = A[sg, sg], A[sg, pm]
    z = np.concatenate([state.phi, state.mu, state.sigma])
    method = "gmres" if params.solver == "gmres" else "direct"
    for _ in range(max_iter):
        x_pm = solve(A_pm, b[pm] - A_pm_s @ z[sg], tol=params.solver_tol, method=method)
        x_s = solve(A_s, b[sg] - A_s_pm @ x_pm, tol=params.solver_tol, method=method)
        new = np.concatenate([x_pm, x_s])
        change = float(np.max(np.abs(new - z)))
        z = new
        if change < tol:
            return z
        if not np.isfinite(change):
            break
    raise NonConvergence(f"decoupling iteration stalled (last change {change:.3e})")


# --------------------------------------------------------------------------
# trajectories
# --------------------------------------------------------------------------


@dataclass
class Trajectory:
    times: np.ndarray
    qoi_names: list[str]
    qoi: np.ndarray  # (T_out, n_qoi)
    snapshots: dict[float, State]
    final: State
    noise_digest: str | None
    seed: int | None
    noise_records: list[np.ndarray] | None = None


Observer = Callable[[int, State], None]


def default_qois(grid: Grid, ops: StepOperators) -> dict[str, Callable[[State], float]]:
    ones_M = np.asarray(ops.M.sum(axis=0)).ravel()
    return {
        "tumor_volume": lambda s: float(ones_M @ s.phi),
        "nutrient_volume": lambda s: float(ones_M @ s.sigma),
    }


def run_simulation(grid: Grid, params: ModelParams, seed: int | None = 0,
                   observers: Sequence[Observer] = (), qoi_every: int = 1,
                   snapshot_times: Sequence[float] = (),
                   qois: dict[str, Callable[[State], float]] | None = None,
                   phi0=None, record_noise: bool = False,
                   ops: StepOperators | None = None) -> Trajectory:
    """Integrate from t=0 to ``params.t_end``.

    QoIs are sampled every ``qoi_every`` steps (and at the final step);
    observers are called with ``(step_index, state)`` at every step
    including the initial one. ``seed=None`` disables noise entirely.
    """
    ops = ops or StepOperators.build(grid, params)
    rng = RngStream(seed, record=record_noise) if seed is not None else None
    qois = qois if qois is not None else default_qois(grid, ops)
    names = list(qois)
    n_steps = params.n_steps
    snap_steps = {int(round(t / params.dt)): t for t in snapshot_times}

    state = initialize(grid, params, phi0=phi0, ops=ops)
    times, rows, snaps = [], [], {}

    def emit(k: int, s: State):
        for obs in observers:
            obs(k, s)
        if k % qoi_every == 0 or k == n_steps:
            times.append(k * params.dt)
            rows.append([q(s) for q in qois.values()])
        if k in snap_steps:
            snaps[snap_steps[k]] = s.copy()

    emit(0, state)
    for k in range(1, n_steps + 1):
        state = step(state, ops, grid, params, rng, step_index=k)
        state.t = k * params.dt
        emit(k, state)

    traj = Trajectory(
        times=np.array(times),
        qoi_names=names,
        qoi=np.array(rows, dtype=float).reshape(len(times), len(names)),
        snapshots=snaps,
        final=state,
        noise_digest=rng.digest if rng is not None else None,
        seed=seed,
        noise_records=rng.records if (record_noise and rng is not None) else None,
    )
    return traj
