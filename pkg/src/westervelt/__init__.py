"""Finite-difference simulator and analysis toolkit for the Westervelt equation
with order-zero absorbing boundary conditions."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DegeneracyError,
    EigensolverFailure,
    EnforcementFailure,
    FitUnreliable,
    NewtonDivergence,
    ProbeAmbiguous,
    RankToleranceAmbiguous,
    SolverError,
    WesterveltError,
)
from .grid import Grid, build_grid
from .model import Equilibrium, PhysicalParams, State, coefficient, cr, threshold
from .stepper import StepperConfig, WesterveltSystem
