"""conic solver backed by cvxpy"""

import logging
import time
from typing import Dict, List

import cvxpy as cp
import numpy as np

from rsmpc.constants import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    RESIDUAL_TOL,
    UNBOUNDED,
)
from rsmpc.solvers.programs import ConicProgram, ConicSolution
from rsmpc.solvers.residuals import max_residual, worst_block
from rsmpc.solvers.solver import ConicSolver
from rsmpc.util._program_dump import program_to_text

_STATUS_MAP = {
    cp.OPTIMAL: OPTIMAL,
    cp.INFEASIBLE: INFEASIBLE,
    cp.INFEASIBLE_INACCURATE: INFEASIBLE,
    cp.UNBOUNDED: UNBOUNDED,
    cp.UNBOUNDED_INACCURATE: UNBOUNDED,
}

_BACKEND_OPTIONS = {
    "CLARABEL": {"tol_feas": 1e-9, "tol_gap_abs": 1e-9, "tol_gap_rel": 1e-8, "max_iter": 500},
    "SCS": {"eps_abs": 1e-9, "eps_rel": 1e-9, "max_iters": 100000},
}


class CvxpyConicSolver(ConicSolver):
    """ConicSolver that compiles programs with cvxpy and solves them with an
    interior point backend (Clarabel by default, SCS as fallback)"""

    backends: List[str]
    residual_tol: float
    logger: logging.Logger

    def __init__(
        self,
        backends: List[str] | None = None,
        residual_tol: float = RESIDUAL_TOL,
        verbose: bool = False,
    ):
        """Builds the solver

        Args:
            backends (List[str]) [["CLARABEL"]]: cvxpy solver names, tried in order
                until one of them does not break down
            residual_tol (float) [RESIDUAL_TOL]: maximum accepted block violation
                on optimal points
            verbose (bool) [False]: forward the backend log to stdout
        """
        super().__init__()
        self.backends = backends if backends is not None else ["CLARABEL"]
        self.residual_tol = residual_tol
        self.verbose = verbose
        self.logger = logging.getLogger("rsmpc_solver")

    def get_name(self) -> str:
        return "cvxpy[" + ",".join(self.backends) + "]"

    def solve(
        self, program: ConicProgram, initial_point: Dict[str, np.ndarray] | None = None
    ) -> ConicSolution:
        problem = program.problem()
        if initial_point is not None:
            program.set_initial_point(initial_point)
        diagnostics = {"program": program.name, "attempts": []}
        status = NUMERICAL_FAILURE
        for backend in self.backends:
            start_time = time.time()
            try:
                problem.solve(
                    solver=backend,
                    warm_start=initial_point is not None,
                    verbose=self.verbose,
                    **_BACKEND_OPTIONS.get(backend, {}),
                )
            except cp.error.SolverError as e:
                self.logger.warning("%s broke down on %s: %s", backend, program.name, e)
                diagnostics["attempts"].append({"backend": backend, "error": str(e)})
                continue
            attempt = {
                "backend": backend,
                "cvxpy_status": problem.status,
                "solve_time": time.time() - start_time,
                "iterations": problem.solver_stats.num_iters,
            }
            diagnostics["attempts"].append(attempt)
            status = _STATUS_MAP.get(problem.status, NUMERICAL_FAILURE)
            if status != NUMERICAL_FAILURE:
                break

        residual = float("inf")
        values = {}
        objective = None
        if status == OPTIMAL:
            residual = max_residual(program)
            diagnostics["residual"] = residual
            if residual > self.residual_tol:
                diagnostics["worst_block"] = worst_block(program)
                self.logger.warning(
                    "%s: residual %s above tolerance on block %s",
                    program.name,
                    str(residual),
                    diagnostics["worst_block"],
                )
                self.logger.debug("%s", program_to_text(program))
                status = NUMERICAL_FAILURE
            else:
                objective = float(problem.value)
                values = {
                    key: np.array(var.value, dtype=float)
                    for key, var in program.variables.items()
                }
        return ConicSolution(
            status=status,
            objective=objective,
            values=values,
            residual=residual,
            diagnostics=diagnostics,
        )
