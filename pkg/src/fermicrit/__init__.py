"""Fermionic ground states with a multi-center Coulomb potential.

Minimizes E_a(gamma) = Tr((-Delta + V) gamma) - a int rho^{5/3} over finite-rank
density matrices on a periodic spectral grid, estimates the critical coupling
a*_N and the finite-rank Lieb-Thirring constant L*_N, and runs blow-up
continuations towards a*_N.
"""
from .errors import (ConfigurationError, DiagnosticError, DomainError,
                     FermicritError, ResolutionError)
from .grid import Grid
from .potential import PotentialSpec
from .state import DensityMatrix
from .solver import GroundState, SolverConfig, minimize

__version__ = "0.1.0"

__all__ = ["Grid", "PotentialSpec", "DensityMatrix", "GroundState", "SolverConfig",
           "minimize", "FermicritError", "ConfigurationError", "DiagnosticError",
           "DomainError", "ResolutionError", "__version__"]
