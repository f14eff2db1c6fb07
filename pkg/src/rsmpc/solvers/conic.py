"""entry points for solving programs with the configured backend"""

from typing import Dict

import numpy as np

from rsmpc.solvers.programs import (
    ConicProgram,
    ConicSolution,
    MaxDetProgram,
    MaxDetSolution,
)
from rsmpc.solvers.solver import ConicSolver
from rsmpc.util._utils import get_solver as _get_solver


def solve_conic(
    program: ConicProgram,
    solver: str | ConicSolver | None = None,
    initial_point: Dict[str, np.ndarray] | None = None,
) -> ConicSolution:
    """Solves a conic program

    Args:
        program (ConicProgram): the program
        solver (str | ConicSolver) [None]: a solver name, an instance, or None for the default
        initial_point (Dict[str, np.ndarray]) [None]: optional hint

    Returns:
        ConicSolution: solution with status in {optimal, infeasible, unbounded, numerical_failure}
    """
    if not isinstance(solver, ConicSolver):
        solver = _get_solver(solver)
    return solver.solve(program, initial_point)


def solve_maxdet(
    program: MaxDetProgram, solver: str | ConicSolver | None = None
) -> MaxDetSolution:
    """Solves a max-det program

    Raises:
        InfeasibleProgram: if the program is infeasible
        NumericalFailure: on solver breakdown
    """
    if not isinstance(solver, ConicSolver):
        solver = _get_solver(solver)
    return solver.solve_maxdet(program)
