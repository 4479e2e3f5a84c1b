"""Random-feature method with explicit Runge-Kutta stepping for nonlinear PDE systems.

Modules:

- ``geometry``: domain partition, partition of unity, collocation and test grids
- ``basis``: random tanh / cos features with closed-form derivatives to order 4
- ``assembly``: rescaled block least-squares systems and fitted fields
- ``integrator``: Runge-Kutta tableaus and the step-and-refit driver
- ``cellmodel``: multiphase phase-field cell model and tissue observables
- ``verify``: manufactured solution, error norms, convergence fits, FD oracle
- ``cli`` / ``runs`` / ``config`` / ``snapshot``: config-driven runs and output
"""
from .assembly import FittedField, LinearSystem, Periodic, SolverError, fit_field
from .basis import Activation, FeatureBasis, sample_basis
from .cellmodel import CellGlobals, CellModel, CellParams, TissueFields
from .geometry import CollocationSet, DomainBox, Partition, PoU, TestGrid
from .integrator import HEUN, BasisConfig, NumericalError, RKTableau, TimeGrid, advance, rk_target
from .jet import Jet

__version__ = "0.1.0"

__all__ = [
    "Activation", "BasisConfig", "CellGlobals", "CellModel", "CellParams", "CollocationSet",
    "DomainBox", "FeatureBasis", "FittedField", "HEUN", "Jet", "LinearSystem", "NumericalError",
    "Partition", "Periodic", "PoU", "RKTableau", "SolverError", "TestGrid", "TimeGrid",
    "TissueFields", "advance", "fit_field", "rk_target", "sample_basis",
]
