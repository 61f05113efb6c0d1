"""Solver layer: exact LP solving plus a smooth convex barrier solver.

Both solvers are deterministic given their inputs and share the
:class:`SolveReport` diagnostics contract.
"""

from .base import SolveReport, SolverError
from .lp import LinearProgram, solve_lp, dual_objective
from .smooth import SmoothConvexProgram, solve_smooth

__all__ = [
    "SolveReport",
    "SolverError",
    "LinearProgram",
    "solve_lp",
    "dual_objective",
    "SmoothConvexProgram",
    "solve_smooth",
]
