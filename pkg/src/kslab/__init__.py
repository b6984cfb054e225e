"""Numerical laboratory for Keller-Segel chemotaxis with signal-dependent sensitivity."""

from .model import ModelParams, SensitivitySpec, build_initial_data
from .simulation import KellerSegelSimulator, simulate
from .solver.grid import Grid
from .solver.scheme import SolverConfig, run

__version__ = "0.1.0"

__all__ = [
    "Grid", "KellerSegelSimulator", "ModelParams", "SensitivitySpec", "SolverConfig", "build_initial_data", "run",
    "simulate",
]
