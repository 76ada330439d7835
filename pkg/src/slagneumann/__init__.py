"""Finite-difference solver and diagnostics for the special Lagrangian type
equation ``sum_i arctan(lambda_i(D^2 u)/f) = Theta`` on convex domains with
Robin and classical Neumann boundary conditions."""

__version__ = "0.1.0"

from .assembly import BoundaryCondition, DiscreteProblem
from .coefficients import Const, Quadratic, Sampled, parse_coefficient
from .geometry import ConvexBody, homotopy_domain, make_domain, signed_distance
from .grid import Field, Grid, build_grid
from .oracle import RadialProblem, compare, radial_solve
from .solver import (EpsilonPath, HomotopySchedule, NewtonConfig, ProblemSpec, Solution,
                     classical_solve, homotopy_solve, newton_solve)
from .specops import Spectrum, eig_sym, evaluate, phase_classify

__all__ = [
    "BoundaryCondition", "DiscreteProblem", "Const", "Quadratic", "Sampled", "parse_coefficient",
    "ConvexBody", "homotopy_domain", "make_domain", "signed_distance", "Field", "Grid",
    "build_grid", "RadialProblem", "compare", "radial_solve", "EpsilonPath", "HomotopySchedule",
    "NewtonConfig", "ProblemSpec", "Solution", "classical_solve", "homotopy_solve",
    "newton_solve", "Spectrum", "eig_sym", "evaluate", "phase_classify",
]
