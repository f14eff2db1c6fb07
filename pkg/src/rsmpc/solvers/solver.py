"""interface that all conic solvers must implement."""

from abc import ABC, abstractmethod
from typing import Dict

import numpy as np

from rsmpc.constants import OPTIMAL
from rsmpc.solvers.programs import (
    ConicProgram,
    ConicSolution,
    MaxDetProgram,
    MaxDetSolution,
)
from rsmpc.util.custom_exceptions import NumericalFailure

# S may come back with tiny negative eigenvalues from interior point methods
_MAXDET_EIG_TOL = 1e-9


class ConicSolver(ABC):
    """interface that all conic solvers must implement.

    A solver turns a ConicProgram into a ConicSolution. Implementations must
    certify every optimal point with the independent residual checker.
    """

    def __init__(self):
        pass

    @abstractmethod
    def solve(
        self, program: ConicProgram, initial_point: Dict[str, np.ndarray] | None = None
    ) -> ConicSolution:
        """solve a conic program

        Args:
            program (ConicProgram): the program to solve
            initial_point (Dict[str, np.ndarray]) [None]: an optional hint for the variables

        Returns:
            ConicSolution: the solution, whose status is one of OPTIMAL,
                INFEASIBLE, UNBOUNDED or NUMERICAL_FAILURE
        """
        pass

    @abstractmethod
    def get_name(self) -> str:
        """return the name of the backend"""
        pass

    def solve_maxdet(self, program: MaxDetProgram) -> MaxDetSolution:
        """solve a max-det program

        Args:
            program (MaxDetProgram): the program to solve

        Returns:
            MaxDetSolution: the optimal S and log det S (or trace S^-1)

        Raises:
            InfeasibleProgram: if the program is infeasible
            NumericalFailure: on solver breakdown or if S is not PSD
        """
        conic = program.to_conic()
        solution = self.solve(conic)
        solution.raise_for_status()
        S = np.asarray(solution.values["S"], dtype=float)
        S = (S + S.T) / 2
        min_eig = float(np.min(np.linalg.eigvalsh(S)))
        if min_eig < -_MAXDET_EIG_TOL:
            raise NumericalFailure(
                f"{program.name}: returned S has eigenvalue {min_eig}",
                solution.diagnostics,
            )
        sign, logdet = np.linalg.slogdet(S)
        if sign <= 0:
            raise NumericalFailure(
                f"{program.name}: returned S is singular", solution.diagnostics
            )
        if program.objective == "logdet":
            objective = float(logdet)
        else:
            objective = float(np.trace(np.linalg.inv(S)))
        return MaxDetSolution(
            S=S, objective=objective, status=OPTIMAL, residual=solution.residual
        )
