"""receding horizon controller with a homothetic nominal tube and a
stochastic error tube

The measured state only enters the prediction used by the cost (indirect
feedback). The tube starts from the first set of the previous solution, so
recursive feasibility does not depend on the realized noise.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List

import cvxpy as cp
import numpy as np

from rsmpc.constants import INFEASIBLE
from rsmpc.model import UncertainLTISystem, project_parameter
from rsmpc.mpc.config import MPCConfig
from rsmpc.solvers.conic import solve_conic
from rsmpc.solvers.programs import ConicProgram, ConstraintBlock
from rsmpc.tube.homothetic import containment_dual_blocks, containment_residual
from rsmpc.tube.terminal import successor
from rsmpc.util._utils import get_solver
from rsmpc.util.custom_exceptions import (
    EstimateOutsideTheta,
    MissingPrevSolution,
    ProblemInfeasible,
    RSMPCException,
)


@dataclass
class MPCStepSolution:
    """optimal solution of one step"""

    k: int
    v: np.ndarray
    s: np.ndarray
    alpha: np.ndarray
    Lambda: List[List[np.ndarray]]
    x_pred: np.ndarray
    u_pred: np.ndarray
    u_applied: np.ndarray
    theta_bar: np.ndarray
    objective: float
    status: str
    diagnostics: Dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.v.shape[0]


@dataclass
class ShiftedCandidate:
    """shifted solution of the previous step with the terminal successor appended"""

    v: np.ndarray
    s: np.ndarray
    alpha: np.ndarray
    Lambda: List[List[np.ndarray]]
    terminal_admissible: bool

    def initial_point(self) -> Dict[str, np.ndarray]:
        """variable hint for the next solve"""
        hint = {"v": self.v, "s": self.s, "alpha": self.alpha}
        for i, row in enumerate(self.Lambda):
            for j, L in enumerate(row):
                hint[f"Lambda_{i}_{j}"] = L
        return hint


@dataclass
class FeasibilityReport:
    """constraint residuals of a candidate, positive when violated"""

    feasible: bool
    worst_residual: float
    residuals: Dict[str, float]


class RobustStochasticMPC:
    """The controller. The program is built once and every step only updates
    its parameters (measured state, estimate, tube start, tightening rows
    and mean disturbance segment)."""

    sys: UncertainLTISystem
    cfg: MPCConfig
    logger: logging.Logger

    def __init__(self, sys: UncertainLTISystem, cfg: MPCConfig) -> None:
        """
        Args:
            sys (UncertainLTISystem): the system, with Theta
            cfg (MPCConfig): horizon, cost, gain, base set, tightening and terminal set

        Raises:
            RSMPCException: on inconsistent dimensions
        """
        if cfg.K.shape != (sys.m, sys.n):
            raise RSMPCException(f"the gain must be {sys.m}x{sys.n}, got {cfg.K.shape}")
        if cfg.terminal.n != sys.n or cfg.base.dim != sys.n:
            raise RSMPCException("terminal set or base set do not match the state dimension")
        if cfg.tightening.f.shape[1] != len(sys.X) or cfg.tightening.g.shape[1] != len(sys.U):
            raise RSMPCException("tightening rows do not match the constraint sets")
        self.sys = sys
        self.cfg = cfg
        self.logger = logging.getLogger("rsmpc_mpc")
        self.solver = get_solver(cfg.solver, cfg.residual_tol)
        self._n_vertices = cfg.base.vertices().shape[0]
        self._compile()

    @property
    def program(self) -> ConicProgram:
        return self._program

    @property
    def parameters(self) -> Dict[str, cp.Parameter]:
        return self._program.parameters

    def _compile(self) -> None:
        sys = self.sys
        cfg = self.cfg
        N, n, m = cfg.N, sys.n, sys.m
        K = cfg.K
        F = sys.X.H
        G = sys.U.H
        f_bar = cfg.base.support_rows(F)
        g_bar = cfg.base.support_rows(G @ K)
        r = cfg.base.H.shape[0]
        q = sys.Theta.H.shape[0]

        v = cp.Variable((N, m), name="v")
        x = cp.Variable((N + 1, n), name="x")
        s = cp.Variable((N + 1, n), name="s")
        alpha = cp.Variable(N + 1, name="alpha")
        Lambda = [
            [cp.Variable((r, q), name=f"Lambda_{i}_{j}") for j in range(self._n_vertices)]
            for i in range(N)
        ]
        params = {
            "x_true": cp.Parameter(n, name="x_true"),
            "A_bar": cp.Parameter((n, n), name="A_bar"),
            "B_bar": cp.Parameter((n, m), name="B_bar"),
            "s0": cp.Parameter(n, name="s0"),
            "alpha0": cp.Parameter(name="alpha0"),
            "f": cp.Parameter((N, F.shape[0]), name="f"),
            "g": cp.Parameter((N, G.shape[0]), name="g"),
            "w_bar": cp.Parameter((N, n), name="w_bar"),
        }

        blocks = [ConstraintBlock("equality", x[0] - params["x_true"], name="prediction_init")]
        for i in range(N):
            u_i = K @ x[i] + v[i]
            blocks.append(
                ConstraintBlock(
                    "equality",
                    x[i + 1]
                    - params["A_bar"] @ x[i]
                    - params["B_bar"] @ u_i
                    - params["w_bar"][i],
                    name=f"prediction_{i}",
                )
            )
        blocks.append(ConstraintBlock("equality", s[0] - params["s0"], name="tube_init_center"))
        blocks.append(
            ConstraintBlock("equality", alpha[0] - params["alpha0"], name="tube_init_scaling")
        )
        for i in range(N):
            blocks.append(
                ConstraintBlock(
                    "nonneg",
                    1.0 - params["f"][i] - alpha[i] * f_bar - F @ s[i],
                    name=f"state_{i}",
                )
            )
            blocks.append(
                ConstraintBlock(
                    "nonneg",
                    1.0 - params["g"][i] - alpha[i] * g_bar - G @ (K @ s[i] + v[i]),
                    name=f"input_{i}",
                )
            )
            blocks += containment_dual_blocks(
                sys,
                K,
                cfg.base,
                s[i],
                alpha[i],
                v[i],
                s[i + 1],
                alpha[i + 1],
                Lambda[i],
                w_bar=params["w_bar"][i],
                name=f"tube_{i}",
            )
        blocks.append(
            ConstraintBlock(
                "nonneg",
                cfg.terminal.h
                - cfg.terminal.H[:, :n] @ s[N]
                - cfg.terminal.H[:, n] * alpha[N],
                name="terminal",
            )
        )
        blocks.append(ConstraintBlock("nonneg", alpha[1:], name="scalings"))

        cost = cfg.cost
        Q = (cost.Q + cost.Q.T) / 2
        R = (cost.R + cost.R.T) / 2
        P = (cost.P + cost.P.T) / 2
        terms = []
        for i in range(N):
            u_i = K @ x[i] + v[i]
            terms.append(cp.quad_form(x[i] - cost.x_ref, Q))
            terms.append(cp.quad_form(u_i - cost.u_ref, R))
            if cost.l1_weight > 0:
                terms.append(cost.l1_weight * cp.norm1(u_i))
        terms.append(cp.quad_form(x[N] - cost.x_ref, P))

        variables = {"v": v, "x": x, "s": s, "alpha": alpha}
        for i, row in enumerate(Lambda):
            for j, L in enumerate(row):
                variables[f"Lambda_{i}_{j}"] = L
        self._program = ConicProgram(
            variables,
            convex_term=sum(terms),
            blocks=blocks,
            parameters=params,
            name="rsmpc",
        )

    def measurement_blocks(self) -> List[str]:
        """names of the blocks that depend on the measured state"""
        x_true = self.parameters["x_true"]
        return [
            block.name
            for block in self._program.blocks
            if any(param.id == x_true.id for param in block.parameters())
        ]

    def _estimate(self, theta_bar) -> np.ndarray:
        theta_bar = np.asarray(theta_bar, dtype=float).reshape(-1)
        if self.sys.Theta.contains(theta_bar):
            return theta_bar
        if not self.cfg.project_estimate:
            raise EstimateOutsideTheta(f"estimate {theta_bar.tolist()} is outside Theta")
        projected = project_parameter(self.sys, theta_bar, self.solver)
        self.logger.warning(
            "estimate %s projected onto Theta: %s", str(theta_bar.tolist()), str(projected.tolist())
        )
        return projected

    def assemble(
        self, x_true, theta_bar, prev: MPCStepSolution | None = None, k: int = 0
    ) -> ConicProgram:
        """Loads the data of step k into the program

        Args:
            x_true: measured state
            theta_bar: parameter estimate, projected onto Theta if needed
            prev (MPCStepSolution) [None]: solution of step k-1, required for k > 0
            k (int) [0]: absolute time

        Raises:
            EstimateOutsideTheta: if the estimate is outside Theta and projection is disabled
            MissingPrevSolution: if k > 0 and prev is None
        """
        if k > 0 and prev is None:
            raise MissingPrevSolution(f"step {k} needs the solution of step {k - 1}")
        x_true = np.asarray(x_true, dtype=float).reshape(-1)
        theta_bar = self._estimate(theta_bar)
        params = self.parameters
        cfg = self.cfg
        params["x_true"].value = x_true
        params["A_bar"].value = self.sys.A(theta_bar)
        params["B_bar"].value = self.sys.B(theta_bar)
        if k == 0:
            params["s0"].value = x_true.copy()
            params["alpha0"].value = 0.0
        else:
            params["s0"].value = np.array(prev.s[1], dtype=float)
            params["alpha0"].value = float(prev.alpha[1])
        params["f"].value = np.vstack([cfg.tightening.f_at(k + i) for i in range(cfg.N)])
        params["g"].value = np.vstack([cfg.tightening.g_at(k + i) for i in range(cfg.N)])
        params["w_bar"].value = cfg.mean_segment(k, self.sys.n)
        self._theta_bar = theta_bar
        return self._program

    def solve_step(
        self, x_true, theta_bar, prev: MPCStepSolution | None = None, k: int = 0
    ) -> MPCStepSolution:
        """Solves step k and returns the solution with the applied input
        u = K x_true + v_0

        Raises:
            ProblemInfeasible: if the program is infeasible
            SolverFailure: on numerical failure
        """
        start_time = time.time()
        program = self.assemble(x_true, theta_bar, prev, k)
        hint = self.shift(prev).initial_point() if k > 0 else None
        solution = solve_conic(program, self.solver, hint)
        if solution.status == INFEASIBLE:
            raise ProblemInfeasible(f"MPC problem infeasible at step {k}")
        solution.raise_for_status()
        values = solution.values
        K = self.cfg.K
        v = values["v"].reshape(self.cfg.N, self.sys.m)
        x_pred = values["x"].reshape(self.cfg.N + 1, self.sys.n)
        x_true = np.asarray(x_true, dtype=float).reshape(-1)
        diagnostics = dict(solution.diagnostics)
        diagnostics["solve_time"] = time.time() - start_time
        self.logger.debug("step %s solved in %s seconds", str(k), str(diagnostics["solve_time"]))
        return MPCStepSolution(
            k=k,
            v=v,
            s=values["s"].reshape(self.cfg.N + 1, self.sys.n),
            alpha=values["alpha"].reshape(-1),
            Lambda=[
                [values[f"Lambda_{i}_{j}"] for j in range(self._n_vertices)]
                for i in range(self.cfg.N)
            ],
            x_pred=x_pred,
            u_pred=x_pred[:-1] @ K.T + v,
            u_applied=K @ x_true + v[0],
            theta_bar=self._theta_bar,
            objective=float(solution.objective),
            status=solution.status,
            diagnostics=diagnostics,
        )

    def shift(self, prev: MPCStepSolution) -> ShiftedCandidate:
        """(v_1..v_{N-1}, 0) with the tube shifted by one step and the
        terminal successor of (s_N, alpha_N) appended"""
        nxt = successor(
            self.cfg.terminal, self.sys, self.cfg.K, self.cfg.base, prev.s[-1], prev.alpha[-1]
        )
        return ShiftedCandidate(
            v=np.vstack([prev.v[1:], np.zeros((1, self.sys.m))]),
            s=np.vstack([prev.s[1:], nxt.s.reshape(1, -1)]),
            alpha=np.append(prev.alpha[1:], nxt.alpha),
            Lambda=[list(row) for row in prev.Lambda[1:]],
            terminal_admissible=nxt.admissible,
        )

    def feasibility_check(self, candidate: ShiftedCandidate, k: int) -> FeasibilityReport:
        """Evaluates a candidate against the tube constraints of step k
        without optimizing. Robust containment is checked with the primal
        oracle, so no multipliers are needed."""
        sys = self.sys
        cfg = self.cfg
        K = cfg.K
        F = sys.X.H
        G = sys.U.H
        f_bar = cfg.base.support_rows(F)
        g_bar = cfg.base.support_rows(G @ K)
        w_bar = cfg.mean_segment(k, sys.n)
        residuals = {"state": -np.inf, "input": -np.inf, "containment": -np.inf}
        for i in range(cfg.N):
            s_i = candidate.s[i]
            a_i = float(candidate.alpha[i])
            residuals["state"] = max(
                residuals["state"],
                float(np.max(F @ s_i + a_i * f_bar - 1.0 + cfg.tightening.f_at(k + i))),
            )
            residuals["input"] = max(
                residuals["input"],
                float(
                    np.max(
                        G @ (K @ s_i + candidate.v[i])
                        + a_i * g_bar
                        - 1.0
                        + cfg.tightening.g_at(k + i)
                    )
                ),
            )
            residuals["containment"] = max(
                residuals["containment"],
                containment_residual(
                    s_i,
                    a_i,
                    candidate.v[i],
                    candidate.s[i + 1],
                    float(candidate.alpha[i + 1]),
                    sys,
                    K,
                    cfg.base,
                    w_bar[i],
                ),
            )
        terminal_point = np.append(candidate.s[-1], candidate.alpha[-1])
        residuals["terminal"] = float(np.max(cfg.terminal.H @ terminal_point - cfg.terminal.h))
        residuals["scalings"] = float(np.max(-candidate.alpha[1:]))
        worst = max(residuals.values())
        return FeasibilityReport(
            feasible=worst <= cfg.residual_tol, worst_residual=worst, residuals=residuals
        )
