"""Executable verification checks.

Every check returns :class:`CheckReport` rows; :func:`run_all` gathers
them for the ``verify`` CLI subcommand.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import assembly
from .constitutive import PotentialSpec, gamma, psi, yosida_resolvent
from .mesh import Grid
from .noise import NoiseSpec
from .postproc import energy_parts
from .stepper import ModelParams, SimulationError, State, StepOperators, run_simulation

log = logging.getLogger(__name__)


@dataclass
class CheckReport:
    name: str
    passed: bool
    measured: float
    bound: float
    details: str = ""

    def row(self) -> list[str]:
        return [self.name, "PASS" if self.passed else "FAIL", f"{self.measured:.6g}",
                f"{self.bound:.6g}", self.details]


def _report(name, measured, bound, details="", passed=None) -> CheckReport:
    measured = float(measured)
    if passed is None:
        passed = bool(np.isfinite(measured) and measured <= bound)
    return CheckReport(name, bool(passed), measured, float(bound), details)


# --------------------------------------------------------------------------
# element oracles
# --------------------------------------------------------------------------

# hand-derived matrices for one element, corners counterclockwise from the
# lower-left vertex
UNIT_MASS = np.array([[4, 2, 1, 2], [2, 4, 2, 1], [1, 2, 4, 2], [2, 1, 2, 4]]) / 36.0
UNIT_STIFFNESS = np.array([[4, -1, -2, -1], [-1, 4, -1, -2], [-2, -1, 4, -1], [-1, -2, -1, 4]]) / 6.0
# hx = 2, hy = 1
ANISO_STIFFNESS = np.array([
    [5 / 6, 1 / 6, -5 / 12, -7 / 12],
    [1 / 6, 5 / 6, -7 / 12, -5 / 12],
    [-5 / 12, -7 / 12, 5 / 6, 1 / 6],
    [-7 / 12, -5 / 12, 1 / 6, 5 / 6],
])
# weight w(x, y) = x on the unit element
X_WEIGHTED_MASS = np.array([
    [1 / 36, 1 / 36, 1 / 72, 1 / 72],
    [1 / 36, 1 / 12, 1 / 24, 1 / 72],
    [1 / 72, 1 / 24, 1 / 12, 1 / 36],
    [1 / 72, 1 / 72, 1 / 36, 1 / 36],
])
X_WEIGHTED_STIFFNESS = np.array([
    [1 / 4, -1 / 12, -1 / 6, 0],
    [-1 / 12, 5 / 12, -1 / 6, -1 / 6],
    [-1 / 6, -1 / 6, 5 / 12, -1 / 12],
    [0, -1 / 6, -1 / 12, 1 / 4],
])


def _local(grid: Grid, A) -> np.ndarray:
    conn = grid.elements[0]
    return A.toarray()[np.ix_(conn, conn)]


def check_element_oracles(bound: float = 1e-14) -> list[CheckReport]:
    unit = Grid(1, 1)
    aniso = Grid(1, 1, lx=2.0, ly=1.0)
    x = unit.coords[:, 0]
    cases = [
        ("element mass", _local(unit, assembly.assemble_mass(unit)), UNIT_MASS),
        ("element stiffness", _local(unit, assembly.assemble_stiffness(unit)), UNIT_STIFFNESS),
        ("element mass, unit weight",
         _local(unit, assembly.assemble_weighted_mass(unit, np.ones(4))), UNIT_MASS),
        ("element stiffness, anisotropic", _local(aniso, assembly.assemble_stiffness(aniso)),
         ANISO_STIFFNESS),
        ("element mass, weight x", _local(unit, assembly.assemble_weighted_mass(unit, x)),
         X_WEIGHTED_MASS),
        ("element stiffness, weight x",
         _local(unit, assembly.assemble_weighted_stiffness(unit, x)), X_WEIGHTED_STIFFNESS),
    ]
    return [_report(name, np.max(np.abs(got - want)), bound) for name, got, want in cases]


# --------------------------------------------------------------------------
# conservation and dissipation
# --------------------------------------------------------------------------


def pure_ch_params(dt: float = 0.01, n_steps: int = 200) -> ModelParams:
    """Cahn-Hilliard only: no chemotaxis, sources or noise; Neumann nutrient."""
    return ModelParams(chi=0.0, alpha=0.0, beta=0.0, delta=0.0,
                       noise=NoiseSpec(nu=0.0, sigma_amp=0.0),
                       sigma_dirichlet=None, dt=dt, t_end=n_steps * dt)


def random_smooth_field(grid: Grid, seed: int = 0, n_modes: int = 4, amplitude: float = 0.1,
                        mean: float = 0.5) -> np.ndarray:
    """``mean`` plus a few low cosine modes with normal coefficients."""
    rng = np.random.default_rng(seed)
    coeff = amplitude * rng.standard_normal((n_modes, n_modes))
    x, y = grid.coords[:, 0] / grid.lx, grid.coords[:, 1] / grid.ly
    cx = np.cos(np.pi * np.outer(x, np.arange(n_modes)))
    cy = np.cos(np.pi * np.outer(y, np.arange(n_modes)))
    return mean + np.einsum("nk,nl,lk->n", cx, cy, coeff)


def pure_ch_history(grid: Grid, n_steps: int, dt: float = 0.01, seed: int = 0,
                    phi0: np.ndarray | None = None, broken_sign: bool = False):
    """Mass ``1^T M phi`` and energy at every step of a pure-CH run.

    ``broken_sign`` flips the sign of the interface term as a negative
    control for the checks built on top of this.
    """
    params = pure_ch_params(dt, n_steps)
    ops = StepOperators.build(grid, params)
    if broken_sign:
        ops.K = -ops.K
    if phi0 is None:
        phi0 = random_smooth_field(grid, seed)
    ones_M = np.asarray(ops.M.sum(axis=0)).ravel()
    mass, en = [], []

    def obs(_k: int, s: State):
        mass.append(float(ones_M @ s.phi))
        en.append(energy_parts(grid, s.phi, s.sigma, params.epsilon, params.chi).total)

    try:
        run_simulation(grid, params, seed=None, observers=[obs], phi0=phi0, ops=ops)
    except SimulationError:
        mass.append(float("nan"))
        en.append(float("inf"))
    return np.array(mass), np.array(en)


def check_conservation_dissipation(grid_sizes: Sequence[int] = (32,), steps: int = 200,
                                   dt: float = 0.01, seed: int = 0,
                                   broken_sign: bool = False) -> list[CheckReport]:
    out = []
    for n in grid_sizes:
        grid = Grid(n, n)
        mass, en = pure_ch_history(grid, steps, dt, seed, broken_sign=broken_sign)
        drift = np.max(np.abs(mass - mass[0])) / max(abs(mass[0]), np.finfo(float).tiny)
        if not np.all(np.isfinite(mass)):
            drift = float("inf")
        rise = float(np.max(np.diff(en))) if len(en) > 1 else 0.0
        if not np.all(np.isfinite(en)):
            rise = float("inf")
        tag = f"{n}x{n}, {steps} steps"
        out.append(_report(f"mass drift ({tag})", drift, 1e-9))
        out.append(_report(f"energy increase per step ({tag})", rise, 1e-10,
                           details=f"E0={en[0]:.6g} E_end={en[-1]:.6g}"))
    return out


# --------------------------------------------------------------------------
# energy estimate monitor
# --------------------------------------------------------------------------


@dataclass
class EnergyMonitor:
    """Observer accumulating discrete surrogates of the a-priori energy bound.

    ``‖u‖_V² = uᵀMu + uᵀKu`` and time integrals use the
    values at the end of each step.
    """

    grid: Grid
    M: object
    K: object
    dt: float
    sup_phi_v: float = 0.0
    sup_psi_l1: float = 0.0
    int_grad_mu: float = 0.0
    int_mu_h: float = 0.0
    sup_sigma_h: float = 0.0
    int_sigma_v: float = 0.0
    rhs: float = float("nan")
    finite: bool = True

    def _psi_l1(self, phi):
        B, _, w = assembly._tables(self.grid)
        return float(np.sum(np.abs(psi(phi[self.grid.elements] @ B.T)) @ w))

    def __call__(self, k: int, s: State):
        M, K = self.M, self.K
        phi_v = float(s.phi @ (M @ s.phi) + s.phi @ (K @ s.phi))
        psi_l1 = self._psi_l1(s.phi)
        sig_h = float(s.sigma @ (M @ s.sigma))
        if k == 0:
            self.rhs = phi_v + psi_l1 + sig_h
        else:
            self.int_grad_mu += self.dt * float(s.mu @ (K @ s.mu))
            self.int_mu_h += self.dt * float(s.mu @ (M @ s.mu))
            self.int_sigma_v += self.dt * float(s.sigma @ (M @ s.sigma) + s.sigma @ (K @ s.sigma))
        self.sup_phi_v = max(self.sup_phi_v, phi_v)
        self.sup_psi_l1 = max(self.sup_psi_l1, psi_l1)
        self.sup_sigma_h = max(self.sup_sigma_h, sig_h)
        self.finite &= bool(np.isfinite(phi_v + psi_l1 + sig_h) and np.all(np.isfinite(s.mu)))

    @property
    def lhs(self) -> float:
        return (self.sup_phi_v + self.sup_psi_l1 + self.int_grad_mu + np.sqrt(self.int_mu_h)
                + self.sup_sigma_h + self.int_sigma_v)

    @property
    def c_emp(self) -> float:
        if self.rhs == 0.0:
            return 0.0 if self.lhs == 0.0 else float("inf")
        return self.lhs / self.rhs


def monitor_energy(grid: Grid, params: ModelParams, seed: int | None = 0,
                   phi0=None) -> EnergyMonitor:
    ops = StepOperators.build(grid, params)
    mon = EnergyMonitor(grid, ops.M, ops.K, params.dt)
    run_simulation(grid, params, seed=seed, observers=[mon], phi0=phi0, ops=ops)
    return mon


def check_energy_estimate(grid: Grid | None = None, params: ModelParams | None = None,
                          seed: int = 0, window: tuple[float, float] = (0.5, 2.0)) -> CheckReport:
    """Ratio of the empirical constants for ``dt`` and ``dt/2``.

    Passes when both runs stay finite and the ratio lies in ``window``.
    """
    grid = grid or Grid(50, 50)
    params = params or ModelParams()
    coarse = monitor_energy(grid, params, seed)
    fine = monitor_energy(grid, replace(params, dt=0.5 * params.dt), seed)
    ratio = coarse.c_emp / fine.c_emp if fine.c_emp > 0 else float("nan")
    ok = coarse.finite and fine.finite and window[0] <= ratio <= window[1]
    return _report("energy estimate c_emp(dt)/c_emp(dt/2)", ratio, window[1],
                   details=f"c_emp={coarse.c_emp:.6g}, {fine.c_emp:.6g}; window {window}",
                   passed=ok)


# --------------------------------------------------------------------------
# Yosida approximation
# --------------------------------------------------------------------------


def check_yosida(lambdas: Sequence[float] = (1.0, 0.1, 0.01, 0.001), n_samples: int = 1000,
                 seed: int = 0, interval: tuple[float, float] = (-2.0, 3.0),
                 resolvent: Callable = yosida_resolvent,
                 spec: PotentialSpec = PotentialSpec()) -> list[CheckReport]:
    """Resolvent residual, Lipschitz bound, ``|γ_λ| ≤ |γ|`` and monotone
    convergence to γ, on random points of ``interval``."""
    rng = np.random.default_rng(seed)
    a = rng.uniform(*interval, n_samples)
    b = rng.uniform(*interval, n_samples)
    g_a = gamma(a, spec)
    out = []
    max_dev = []
    for lam in lambdas:
        ya = resolvent(a, lam, spec)
        yb = resolvent(b, lam, spec)
        res = np.max(np.abs(ya + lam * gamma(ya, spec) - a))
        gl_a = (a - ya) / lam
        gl_b = (b - yb) / lam
        lip = np.max(np.abs(gl_a - gl_b) - np.abs(a - b) / lam)
        dom = np.max(np.abs(gl_a) - np.abs(g_a))
        mono = np.min((gl_a - gl_b) * (a - b))
        out.append(_report(f"yosida residual (lambda={lam:g})", res, 1e-12))
        # small slack for rounding in the difference quotients
        out.append(_report(f"yosida Lipschitz (lambda={lam:g})", lip, 1e-12 / lam))
        out.append(_report(f"yosida |g_lam| <= |g| (lambda={lam:g})", dom, 1e-12))
        out.append(_report(f"yosida monotone (lambda={lam:g})", -mono, 1e-12))
        max_dev.append(float(np.max(np.abs(gl_a - g_a))))
    order = np.argsort(lambdas)[::-1]  # decreasing lambda
    devs = np.array(max_dev)[order]
    increase = float(np.max(np.diff(devs))) if len(devs) > 1 else 0.0
    out.append(_report("yosida convergence monotone in lambda", increase, 0.0,
                       details="max|g_lam - g| = " + ", ".join(f"{d:.3g}" for d in devs),
                       passed=bool(np.all(np.diff(devs) < 0))))
    return out


# --------------------------------------------------------------------------
# spatial convergence
# --------------------------------------------------------------------------


def prolong(coarse: Grid, u: np.ndarray, fine: Grid) -> np.ndarray:
    """Evaluate the Q1 interpolant of ``u`` at the nodes of ``fine``."""
    ax = np.linspace(0.0, coarse.lx, coarse.nx + 1)
    ay = np.linspace(0.0, coarse.ly, coarse.ny + 1)
    interp = RegularGridInterpolator((ay, ax), coarse.to_array(u))
    return interp(fine.coords[:, ::-1])


def convergence_errors(sizes: Sequence[int] = (16, 32, 64), reference: int = 128,
                       params: ModelParams | None = None, field_name: str = "phi",
                       phi0=None) -> tuple[list[float], dict]:
    """L² errors of deterministic runs against a fine reference run."""
    if params is None:
        params = ModelParams(noise=NoiseSpec(nu=0.0, sigma_amp=0.0), dt=1e-3, t_end=0.1)
    finals = {}
    for n in (*sizes, reference):
        grid = Grid(n, n)
        finals[n] = (grid, run_simulation(grid, params, seed=None, phi0=phi0).final)
    ref_grid, ref = finals[reference]
    M = assembly.assemble_mass(ref_grid)
    errs = []
    for n in sizes:
        grid, s = finals[n]
        e = prolong(grid, getattr(s, field_name), ref_grid) - getattr(ref, field_name)
        errs.append(float(np.sqrt(max(e @ (M @ e), 0.0))))
    return errs, finals


def check_spatial_convergence(sizes: Sequence[int] = (16, 32, 64), reference: int = 128,
                              params: ModelParams | None = None,
                              window: tuple[float, float] = (3.0, 5.0)) -> list[CheckReport]:
    errs, _ = convergence_errors(sizes, reference, params)
    out = []
    for k in range(len(sizes) - 1):
        ratio = errs[k] / errs[k + 1] if errs[k + 1] > 0 else float("inf")
        out.append(_report(
            f"L2 error ratio {sizes[k]}->{sizes[k + 1]} (ref {reference})", ratio, window[1],
            details=f"errors {errs[k]:.4g}, {errs[k + 1]:.4g}; window {window}",
            passed=bool(window[0] <= ratio <= window[1]),
        ))
    return out


def run_all(quick: bool = False) -> list[CheckReport]:
    """Full suite; ``quick`` shrinks the expensive runs."""
    reports = check_element_oracles()
    reports += check_conservation_dissipation((16,) if quick else (32,), 200)
    reports += check_yosida()
    if quick:
        reports.append(check_energy_estimate(Grid(16, 16), ModelParams(t_end=0.2)))
    else:
        reports.append(check_energy_estimate())
        reports += check_spatial_convergence()
    return reports


def format_table(reports: Sequence[CheckReport]) -> str:
    rows = [["check", "status", "measured", "bound", "details"]] + [r.row() for r in reports]
    widths = [max(len(r[k]) for r in rows) for k in range(4)]
    lines = []
    for r in rows:
        lines.append("  ".join(r[k].ljust(widths[k]) for k in range(4)) + "  " + r[4])
    return "\n".join(lines)
