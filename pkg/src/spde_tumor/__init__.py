"""Stochastic Cahn-Hilliard tumor growth with nutrient coupling.

Q1 finite elements on a rectangle, semi-implicit Euler-Maruyama time
stepping, Monte Carlo ensembles and a verification suite.
"""
from .mesh import Grid, build_grid
from .stepper import ModelParams, SimulationError, State, run_simulation

__version__ = "0.1.0"

__all__ = ["Grid", "build_grid", "ModelParams", "SimulationError", "State", "run_simulation",
           "__version__"]
