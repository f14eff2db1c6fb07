"""closed loop rollout of the true plant under the controller"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from rsmpc.constants import INFEASIBLE, NUMERICAL_FAILURE, OPTIMAL
from rsmpc.model import UncertainLTISystem
from rsmpc.mpc.controller import RobustStochasticMPC
from rsmpc.sim.estimators import EstimatorHook
from rsmpc.util.custom_exceptions import ProblemInfeasible, SolverFailure

logger = logging.getLogger("rsmpc_sim")


@dataclass
class ClosedLoopTrace:
    """record of one closed loop run

    A complete run has T+1 states and T inputs. A run halted by an
    infeasible or failed step stops at that step, whose status is recorded.
    Constraint flags are True where the row is satisfied and are computed
    from the recorded states and inputs.
    """

    seed: int | None
    theta_true: np.ndarray
    x: np.ndarray
    u: np.ndarray
    v0: np.ndarray
    s0: np.ndarray
    alpha0: np.ndarray
    theta_bar: np.ndarray
    status: List[str]
    stage_cost: np.ndarray
    state_flags: np.ndarray
    input_flags: np.ndarray
    halted: bool = False
    z: np.ndarray | None = None
    e: np.ndarray | None = None
    tube_contains: np.ndarray | None = None
    candidate_feasible: List[bool] = field(default_factory=list)

    @property
    def steps(self) -> int:
        """number of applied inputs"""
        return self.u.shape[0]

    @property
    def total_cost(self) -> float:
        """accumulated closed loop stage cost"""
        return float(np.sum(self.stage_cost))

    def summary(self) -> Dict:
        return {
            "seed": self.seed,
            "theta_true": self.theta_true.tolist(),
            "steps": self.steps,
            "halted": self.halted,
            "final_status": self.status[-1] if len(self.status) > 0 else None,
            "total_cost": self.total_cost,
            "state_satisfaction": float(np.mean(self.state_flags)),
            "input_satisfaction": float(np.mean(self.input_flags)) if self.steps > 0 else 1.0,
        }


def constraint_flags(sys: UncertainLTISystem, x: np.ndarray, u: np.ndarray):
    """row-wise satisfaction of F x <= 1 and G u <= 1"""
    x = np.atleast_2d(x)
    u = np.array(u, dtype=float).reshape(-1, sys.m)
    return x @ sys.X.H.T <= sys.X.h, u @ sys.U.H.T <= sys.U.h


def run_closed_loop(
    sys: UncertainLTISystem,
    theta_true,
    controller: RobustStochasticMPC,
    estimator: EstimatorHook,
    W: np.ndarray,
    T: int | None = None,
    x0=None,
    seed: int | None = None,
    diagnostics: bool = False,
    check_candidates: bool = False,
) -> ClosedLoopTrace:
    """Runs the plant x+ = A(theta_true) x + B(theta_true) u + w with the
    inputs of the controller

    Args:
        sys (UncertainLTISystem): the plant description (the controller may
            use a different Theta)
        theta_true: the true parameter
        controller (RobustStochasticMPC): configured controller
        estimator (EstimatorHook): called once per step before the solve
        W (np.ndarray): realized noise in state space, T x n
        T (int) [None]: number of steps, all rows of W by default
        x0 [None]: initial state, the origin by default
        seed (int) [None]: seed W was drawn with, stored in the trace
        diagnostics (bool) [False]: also record the nominal and error states
            z, e and whether z lies in the first tube set
        check_candidates (bool) [False]: check the shifted candidate of
            every step with the feasibility-only test
    """
    theta_true = np.asarray(theta_true, dtype=float).reshape(-1)
    if not sys.Theta.contains(theta_true):
        logger.warning("true parameter %s is outside Theta", str(theta_true.tolist()))
    W = np.atleast_2d(W)
    T = W.shape[0] if T is None else T
    n, m = sys.n, sys.m
    K = controller.cfg.K
    A_true = sys.A(theta_true)
    B_true = sys.B(theta_true)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).reshape(-1)
    z = x.copy()
    estimator.reset()

    states = [x.copy()]
    inputs, v0, s0, alpha0, theta_bar, status, stage_cost = [], [], [], [], [], [], []
    nominal = [z.copy()]
    tube_contains = []
    candidate_feasible = []
    halted = False
    prev = None
    for k in range(T):
        estimate = estimator.update(np.array(states), np.array(inputs).reshape(-1, m), k)
        theta_bar.append(estimate)
        if check_candidates and prev is not None:
            report = controller.feasibility_check(controller.shift(prev), k)
            candidate_feasible.append(report.feasible)
        try:
            solution = controller.solve_step(x, estimate, prev, k)
        except ProblemInfeasible:
            logger.warning("step %s infeasible, run halted", str(k))
            status.append(INFEASIBLE)
            halted = True
            break
        except SolverFailure as e:
            logger.warning("step %s failed (%s), run halted", str(k), str(e))
            status.append(NUMERICAL_FAILURE)
            halted = True
            break
        status.append(OPTIMAL)
        u = solution.u_applied
        if diagnostics:
            tube_contains.append(
                bool(
                    np.all(
                        controller.cfg.base.H @ (z - solution.s[0])
                        <= solution.alpha[0] * controller.cfg.base.h + 1e-7
                    )
                )
            )
            w_bar = controller.cfg.mean_segment(k, n)[0]
            z = A_true @ z + B_true @ (K @ z + solution.v[0]) + w_bar
            nominal.append(z.copy())
        inputs.append(u)
        v0.append(solution.v[0])
        s0.append(solution.s[0])
        alpha0.append(solution.alpha[0])
        stage_cost.append(controller.cfg.cost.stage(x, u))
        x = A_true @ x + B_true @ u + W[k]
        states.append(x.copy())
        prev = solution

    x_arr = np.array(states)
    u_arr = np.array(inputs, dtype=float).reshape(-1, m)
    state_flags, input_flags = constraint_flags(sys, x_arr, u_arr)
    trace = ClosedLoopTrace(
        seed=seed,
        theta_true=theta_true,
        x=x_arr,
        u=u_arr,
        v0=np.array(v0, dtype=float).reshape(-1, m),
        s0=np.array(s0, dtype=float).reshape(-1, n),
        alpha0=np.array(alpha0, dtype=float),
        theta_bar=np.array(theta_bar, dtype=float).reshape(-1, sys.p),
        status=status,
        stage_cost=np.array(stage_cost, dtype=float),
        state_flags=state_flags,
        input_flags=input_flags,
        halted=halted,
        candidate_feasible=candidate_feasible,
    )
    if diagnostics:
        z_arr = np.array(nominal)
        trace.z = z_arr
        trace.e = x_arr[: z_arr.shape[0]] - z_arr
        trace.tube_contains = np.array(tube_contains, dtype=bool)
    return trace
