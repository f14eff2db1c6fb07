"""parameter estimate hooks for the closed loop

Every hook returns a point of Theta: estimates are projected onto Theta
before they reach the controller.
"""

from abc import ABC, abstractmethod
from typing import Tuple

import numpy as np

from rsmpc.model import UncertainLTISystem, project_parameter
from rsmpc.solvers.solver import ConicSolver

# inverse of the prior covariance of the least squares recursion
_RLS_REGULARIZATION = 1e-8


class EstimatorHook(ABC):
    """interface of the estimate hooks"""

    @abstractmethod
    def update(self, states: np.ndarray, inputs: np.ndarray, k: int) -> np.ndarray:
        """returns the estimate to use at step k

        Args:
            states (np.ndarray): x_0..x_k, one per row
            inputs (np.ndarray): u_0..u_{k-1}, one per row
            k (int): absolute time
        """
        pass

    def reset(self) -> None:
        """forgets the data of a previous run"""
        pass


class ConstantEstimator(EstimatorHook):
    """always returns the same estimate"""

    def __init__(self, sys: UncertainLTISystem, theta, solver: str | ConicSolver | None = None):
        self.theta = project_parameter(sys, theta, solver)

    def update(self, states, inputs, k):
        return self.theta.copy()


def rls_step(
    theta: np.ndarray, P: np.ndarray, phi: np.ndarray, y: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """one least squares update for the vector observation y = phi theta + noise"""
    S = np.eye(phi.shape[0]) + phi @ P @ phi.T
    gain = np.linalg.solve(S, phi @ P).T
    theta = theta + gain @ (y - phi @ theta)
    P = P - gain @ phi @ P
    return theta, (P + P.T) / 2


def _regressions(sys: UncertainLTISystem, states, inputs, w_bar, start: int, stop: int):
    for t in range(start, stop):
        phi = sys.D(states[t], inputs[t])
        y = states[t + 1] - sys.A_list[0] @ states[t] - sys.B_list[0] @ inputs[t]
        if w_bar is not None and t < w_bar.shape[0]:
            y = y - w_bar[t]
        yield phi, y


def rls_projected_update(
    sys: UncertainLTISystem,
    states: np.ndarray,
    inputs: np.ndarray,
    prior,
    w_bar: np.ndarray | None = None,
    regularization: float = _RLS_REGULARIZATION,
    solver: str | ConicSolver | None = None,
) -> np.ndarray:
    """Recursive least squares on x_{t+1} - A_0 x_t - B_0 u_t - w_bar_t = D(x_t, u_t) theta
    over the whole record, started from prior, then projected onto Theta

    Returns the projected prior when no regressor carries information.
    """
    prior = np.asarray(prior, dtype=float).reshape(-1)
    states = np.atleast_2d(states)
    inputs = np.atleast_2d(inputs) if len(inputs) > 0 else np.zeros((0, sys.m))
    theta = prior.copy()
    P = np.eye(sys.p) / regularization
    informative = False
    for phi, y in _regressions(sys, states, inputs, w_bar, 0, inputs.shape[0]):
        if not np.any(phi):
            continue
        informative = True
        theta, P = rls_step(theta, P, phi, y)
    if not informative:
        return project_parameter(sys, prior, solver)
    return project_parameter(sys, theta, solver)


class ProjectedRLSEstimator(EstimatorHook):
    """recursive least squares, projected onto Theta at every output

    The unprojected estimate is carried between steps, so each update only
    processes the newest transition.
    """

    def __init__(
        self,
        sys: UncertainLTISystem,
        prior,
        w_bar: np.ndarray | None = None,
        regularization: float = _RLS_REGULARIZATION,
        solver: str | ConicSolver | None = None,
    ):
        self.sys = sys
        self.prior = np.asarray(prior, dtype=float).reshape(-1)
        self.w_bar = None if w_bar is None else np.atleast_2d(w_bar)
        self.regularization = regularization
        self.solver = solver
        self.reset()

    def reset(self) -> None:
        self._theta = self.prior.copy()
        self._P = np.eye(self.sys.p) / self.regularization
        self._seen = 0

    def update(self, states, inputs, k):
        states = np.atleast_2d(states)
        stop = len(inputs)
        if stop > self._seen:
            for phi, y in _regressions(
                self.sys, states, np.atleast_2d(inputs), self.w_bar, self._seen, stop
            ):
                if np.any(phi):
                    self._theta, self._P = rls_step(self._theta, self._P, phi, y)
            self._seen = stop
        return project_parameter(self.sys, self._theta, self.solver)
