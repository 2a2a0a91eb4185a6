"""Trajectory-based non-adiabatic dynamics on 1D two-state models.

All quantities are in Hartree atomic units (hbar = 1): energies in hartree,
lengths in bohr, masses in electron masses, time in a.u. of time.
"""

__version__ = "0.1.0"

from .models import DiabaticModel, AdiabaticPoint, make_model
from .grid import UniformGrid, GridWavefunction, SplitOperatorPropagator
from .sampling import InitialConditions, sample_wigner, sample_fixed_momentum

__all__ = [
    "__version__",
    "DiabaticModel",
    "AdiabaticPoint",
    "make_model",
    "UniformGrid",
    "GridWavefunction",
    "SplitOperatorPropagator",
    "InitialConditions",
    "sample_wigner",
    "sample_fixed_momentum",
]
