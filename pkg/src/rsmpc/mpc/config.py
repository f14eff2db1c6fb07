"""configuration of the receding horizon controller"""

from dataclasses import dataclass

import numpy as np

from rsmpc.constants import RESIDUAL_TOL
from rsmpc.polytope import Polytope
from rsmpc.rprs.sets import TighteningTable
from rsmpc.tube.terminal import TerminalSet
from rsmpc.util.custom_exceptions import RSMPCException


@dataclass
class StageCost:
    """l(x, u) = |x - x_ref|_Q^2 + |u - u_ref|_R^2 + l1_weight |u|_1 and
    l_f(x) = |x - x_ref|_P^2"""

    Q: np.ndarray
    R: np.ndarray
    P: np.ndarray
    x_ref: np.ndarray | None = None
    u_ref: np.ndarray | None = None
    l1_weight: float = 0.0

    def __post_init__(self):
        self.Q = np.array(self.Q, dtype=float, ndmin=2)
        self.R = np.array(self.R, dtype=float, ndmin=2)
        self.P = np.array(self.P, dtype=float, ndmin=2)
        n = self.Q.shape[0]
        m = self.R.shape[0]
        if self.Q.shape != (n, n) or self.P.shape != (n, n) or self.R.shape != (m, m):
            raise RSMPCException("cost matrices must be square and consistent")
        if np.min(np.linalg.eigvalsh((self.Q + self.Q.T) / 2)) < -RESIDUAL_TOL:
            raise RSMPCException("Q must be positive semidefinite")
        if np.min(np.linalg.eigvalsh((self.R + self.R.T) / 2)) <= 0:
            raise RSMPCException("R must be positive definite")
        if np.min(np.linalg.eigvalsh((self.P + self.P.T) / 2)) < -RESIDUAL_TOL:
            raise RSMPCException("P must be positive semidefinite")
        if self.l1_weight < 0:
            raise RSMPCException("the l1 weight must be nonnegative")
        self.x_ref = np.zeros(n) if self.x_ref is None else np.asarray(self.x_ref, dtype=float)
        self.u_ref = np.zeros(m) if self.u_ref is None else np.asarray(self.u_ref, dtype=float)

    def stage(self, x: np.ndarray, u: np.ndarray) -> float:
        """numeric stage cost"""
        dx = np.asarray(x, dtype=float) - self.x_ref
        du = np.asarray(u, dtype=float) - self.u_ref
        return float(
            dx @ self.Q @ dx + du @ self.R @ du + self.l1_weight * np.sum(np.abs(u))
        )

    def terminal(self, x: np.ndarray) -> float:
        """numeric terminal cost"""
        dx = np.asarray(x, dtype=float) - self.x_ref
        return float(dx @ self.P @ dx)


@dataclass
class MPCConfig:
    """Everything the controller needs besides the system

    w_bar holds the known mean disturbance in state space, one row per
    absolute time step, and is taken as zero beyond its last row.
    """

    N: int
    cost: StageCost
    K: np.ndarray
    base: Polytope
    tightening: TighteningTable
    terminal: TerminalSet
    w_bar: np.ndarray | None = None
    project_estimate: bool = True
    solver: str | None = None
    residual_tol: float = 1e-6

    def __post_init__(self):
        if self.N < 1:
            raise RSMPCException(f"the horizon must be at least 1, got {self.N}")
        self.K = np.array(self.K, dtype=float, ndmin=2)
        if self.w_bar is not None:
            self.w_bar = np.array(self.w_bar, dtype=float, ndmin=2)

    def mean_segment(self, k: int, n: int) -> np.ndarray:
        """w_bar for the steps k..k+N-1 (N x n)"""
        segment = np.zeros((self.N, n))
        if self.w_bar is None:
            return segment
        for i in range(self.N):
            if k + i < self.w_bar.shape[0]:
                segment[i] = self.w_bar[k + i]
        return segment
