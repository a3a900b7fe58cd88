"""Axisymmetric magnetized polytropic stars: potentials, energy and equilibria."""

from .fields import (DensityField, Grid, PolytropeEos, ScalarField, SupportConstraint,
                     SupportMode)
from .energy import EnergyBreakdown, energy
from .equilibrium import SolveConfig, SolveReport, solve

__all__ = [
    "DensityField", "Grid", "PolytropeEos", "ScalarField", "SupportConstraint", "SupportMode",
    "EnergyBreakdown", "energy", "SolveConfig", "SolveReport", "solve",
]
__version__ = "0.1.0"
