"""Pointwise model functions: double-well potential, growth, mobility,
initial tumor profile and the Yosida regularization of the potential.

All functions accept scalars or numpy arrays and are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Splitting coefficient of the implicit (convex) part of the potential.
CONTRACTIVE_COEFF = 0.75


@dataclass(frozen=True)
class PotentialSpec:
    """Quartic double well ``psi(x) = x**2 (1 - x)**2 / 4``.

    ``c_psi`` bounds ``psi''`` from below; ``psi'' >= -1/4`` so any
    ``c_psi >= 1/4`` makes ``gamma(r) = psi'(r) + c_psi r`` nondecreasing.
    """

    kind: str = "quartic"
    c_psi: float = 0.25

    def __post_init__(self):
        if self.kind != "quartic":
            raise ValueError(f"unknown potential kind {self.kind!r}")
        if self.c_psi < 0.25:
            raise ValueError("c_psi must be >= 1/4 for the quartic double well")


@dataclass(frozen=True)
class GrowthSpec:
    kind: str = "logistic"

    def __post_init__(self):
        if self.kind not in ("logistic", "gompertz"):
            raise ValueError(f"unknown growth kind {self.kind!r}")


@dataclass(frozen=True)
class MobilitySpec:
    """``constant``: m = value. ``quartic_interface``: m = value + 1_[0,1](x) x^2 (1-x)^2."""

    kind: str = "constant"
    value: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "quartic_interface"):
            raise ValueError(f"unknown mobility kind {self.kind!r}")
        if not self.value > 0:
            raise ValueError("mobility value/floor must be positive")

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == "constant":
            return self.value, self.value
        return self.value, self.value + 1.0 / 16.0

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant"


def psi(x, spec: PotentialSpec | None = None):
    x = np.asarray(x, dtype=float)
    return 0.25 * x * x * (1.0 - x) ** 2


def psi_prime(x, spec: PotentialSpec | None = None):
    x = np.asarray(x, dtype=float)
    return x**3 - 1.5 * x**2 + 0.5 * x


def psi_second(x, spec: PotentialSpec | None = None):
    x = np.asarray(x, dtype=float)
    return 3.0 * x**2 - 3.0 * x + 0.5


def psi_split(x):
    """Convex-concave splitting of ``psi'``.

    Returns the explicit (expansive) derivative ``x^3 - 1.5 x^2 - 0.25 x``
    and the coefficient 0.75 of the implicit linear part, so that
    ``expansive + 0.75 * x == psi_prime(x)``.
    """
    x = np.asarray(x, dtype=float)
    return x**3 - 1.5 * x**2 - 0.25 * x, CONTRACTIVE_COEFF


def growth_f(x, spec: GrowthSpec):
    y = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    if spec.kind == "logistic":
        return y * (1.0 - y)
    # y log(1/y) -> 0 as y -> 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(y > 0.0, -y * np.log(np.where(y > 0.0, y, 1.0)), 0.0)
    return out


def mobility(x, spec: MobilitySpec):
    x = np.asarray(x, dtype=float)
    if spec.kind == "constant":
        return np.full_like(x, spec.value)
    inside = (x >= 0.0) & (x <= 1.0)
    return spec.value + np.where(inside, x * x * (1.0 - x) ** 2, 0.0)


def initial_phi0(x, y):
    """Smooth bump of radius 1/4 centred at (1/2, 1/2), peak value 1."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    s = 16.0 * ((x - 0.5) ** 2 + (y - 0.5) ** 2)
    inside = s < 1.0
    with np.errstate(divide="ignore", over="ignore"):
        val = np.exp(1.0 - 1.0 / (1.0 - np.where(inside, s, 0.0)))
    return np.where(inside, val, 0.0)


# --------------------------------------------------------------------------
# Yosida regularization
# --------------------------------------------------------------------------


class ResolventError(RuntimeError):
    pass


def gamma(r, spec: PotentialSpec = PotentialSpec()):
    """Monotone shift ``psi'(r) + c_psi r``."""
    r = np.asarray(r, dtype=float)
    return psi_prime(r) + spec.c_psi * r


def _gamma_prime(r, spec):
    return psi_second(r) + spec.c_psi


def yosida_resolvent(r, lam: float, spec: PotentialSpec = PotentialSpec(),
                     max_iter: int = 200):
    """Solve ``y + lam * gamma(y) = r`` for y (vectorized).

    Newton iterations are kept inside a shrinking bracket; a step that
    leaves the bracket is replaced by bisection.
    """
    if not lam > 0:
        raise ValueError("lam must be positive")
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r).astype(float)

    g = np.abs(gamma(r, spec))
    lo = r - lam * g - 1.0
    hi = r + lam * g + 1.0
    y = r.copy()
    tol = 1e-12 * np.maximum(1.0, np.abs(r))

    def resid(v):
        return v + lam * gamma(v, spec) - r

    for _ in range(max_iter):
        res = resid(y)
        done = np.abs(res) <= 0.25 * tol
        if np.all(done):
            break
        # residual is increasing in y: shrink the bracket
        lo = np.where(res < 0, np.maximum(lo, y), lo)
        hi = np.where(res > 0, np.minimum(hi, y), hi)
        step = res / (1.0 + lam * _gamma_prime(y, spec))
        y_new = y - step
        bad = (y_new <= lo) | (y_new >= hi) | ~np.isfinite(y_new)
        y_new = np.where(bad, 0.5 * (lo + hi), y_new)
        y = np.where(done, y, y_new)
    res = resid(y)
    if np.any(np.abs(res) > tol):
        worst = float(np.max(np.abs(res) / tol))
        raise ResolventError(f"resolvent solve did not converge (residual/tol={worst:.3g})")
    return float(y[0]) if scalar else y


def yosida_gamma_lambda(r, lam: float, spec: PotentialSpec = PotentialSpec()):
    r = np.asarray(r, dtype=float)
    return (r - yosida_resolvent(r, lam, spec)) / lam


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def yosida_psi_lambda(r, lam: float, spec: PotentialSpec = PotentialSpec(),
                      panels: int = 64):
    """Regularized potential ``psi(0) - c_psi r^2/2 + int_0^r gamma_lambda``.

    The integral uses composite 4-point Gauss-Legendre on ``panels``
    equal panels of [0, r].
    """
    if panels < 64:
        raise ValueError("at least 64 panels are required")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    # unit-interval nodes/weights, scaled by r below
    s_unit = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
    w_unit = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
    s = r_arr[:, None] * s_unit[None, :]
    integral = r_arr * (yosida_gamma_lambda(s, lam, spec) @ w_unit)
    out = float(psi(0.0)) - 0.5 * spec.c_psi * r_arr**2 + integral
    return float(out[0]) if np.ndim(r) == 0 else out


def yosida_psi_lambda_prime(r, lam: float, spec: PotentialSpec = PotentialSpec()):
    r = np.asarray(r, dtype=float)
    return yosida_gamma_lambda(r, lam, spec) - spec.c_psi * r
