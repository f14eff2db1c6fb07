"""robust bounds on the variance of the closed loop error e_k

e_{k+1} = A_CL(theta) e_k + w_k, e_0 = 0. The bounds dominate var[e_k] in
the Loewner order for every theta in Theta, and are computed with max-det
programs imposed at the vertices of Theta.
"""

import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List

import cvxpy as cp
import numpy as np

from rsmpc.constants import (
    ARTIFACT_FORMAT_VERSION,
    CORRELATION_FALLBACK_SHIFT,
    PSD_EPS,
)
from rsmpc.model import UncertainLTISystem
from rsmpc.rprs.noise import NoiseModel
from rsmpc.solvers.conic import solve_maxdet
from rsmpc.solvers.programs import MaxDetProgram
from rsmpc.solvers.solver import ConicSolver
from rsmpc.util._utils import load_json, save_json
from rsmpc.util.custom_exceptions import CorrelationBoundViolated, RSMPCException

logger = logging.getLogger("rsmpc_variance")

_VARIANCE_FILE = "variance_bounds.json"


@dataclass
class VarianceBoundSequence:
    """Bounds [V_1 .. V_T] on var[e_k] and the input bounds K V_k K^T

    bound(0) is the zero matrix (e_0 = 0); indices beyond T are clamped to T.
    """

    bounds: List[np.ndarray]
    K: np.ndarray
    kind: str = "iid"
    input_bounds: List[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.K = np.array(self.K, dtype=float, ndmin=2)
        self.bounds = [np.array(V, dtype=float, ndmin=2) for V in self.bounds]
        if len(self.input_bounds) == 0:
            self.input_bounds = [self.K @ V @ self.K.T for V in self.bounds]

    @property
    def T(self) -> int:
        """number of tabulated steps"""
        return len(self.bounds)

    @property
    def n(self) -> int:
        """state dimension"""
        return self.bounds[0].shape[0]

    def bound(self, k: int) -> np.ndarray:
        """bound on var[e_k]"""
        if k <= 0:
            return np.zeros((self.n, self.n))
        return self.bounds[min(k, self.T) - 1]

    def input_bound(self, k: int) -> np.ndarray:
        """bound on var[K e_k]"""
        if k <= 0:
            return np.zeros((self.K.shape[0], self.K.shape[0]))
        return self.input_bounds[min(k, self.T) - 1]

    def log_dets(self) -> List[float]:
        """log det V_k for k = 1..T"""
        return [float(np.linalg.slogdet(V)[1]) for V in self.bounds]

    def save_to_folder(self, folder_path: str) -> None:
        """Saves the bounds into folder_path (created if missing)"""
        if not os.path.exists(folder_path):
            os.makedirs(folder_path)
        save_json(
            {
                "version": ARTIFACT_FORMAT_VERSION,
                "kind": self.kind,
                "K": self.K,
                "bounds": self.bounds,
                "input_bounds": self.input_bounds,
            },
            os.path.join(folder_path, _VARIANCE_FILE),
        )


def variance_bounds_load_from_folder(folder_path: str) -> VarianceBoundSequence:
    """Loads bounds saved with VarianceBoundSequence.save_to_folder"""
    data = load_json(os.path.join(folder_path, _VARIANCE_FILE))
    if data.get("version") != ARTIFACT_FORMAT_VERSION:
        raise RSMPCException(f"unsupported variance bound format {data.get('version')}")
    return VarianceBoundSequence(
        bounds=[np.array(V) for V in data["bounds"]],
        K=np.array(data["K"]),
        kind=data["kind"],
        input_bounds=[np.array(V) for V in data["input_bounds"]],
    )


def _schur_bound_block(S, Z: np.ndarray, A: np.ndarray, Y_inv: np.ndarray):
    """PSD block equivalent to S^-1 >= A Y A^T + Z for Z > 0, Y > 0"""
    n = Z.shape[0]
    q = Y_inv.shape[0]
    return cp.bmat(
        [
            [S, S @ Z, S @ A],
            [Z @ S, Z, np.zeros((n, q))],
            [A.T @ S, np.zeros((q, n)), Y_inv],
        ]
    )


def _certify(X: np.ndarray, lower_bounds: List[np.ndarray]) -> np.ndarray:
    """Inflates X by the worst negative eigenvalue of X - L over lower_bounds"""
    X = (X + X.T) / 2
    worst = min(float(np.min(np.linalg.eigvalsh(X - L))) for L in lower_bounds)
    if worst < 0:
        logger.warning("bound inflated by %s to restore dominance", str(-worst))
        X = X + abs(worst) * np.eye(X.shape[0])
    return X


def _bounding_step(
    A_list: List[np.ndarray],
    Z_list: List[np.ndarray],
    Y: np.ndarray,
    objective: str,
    solver: str | ConicSolver | None,
    name: str,
) -> np.ndarray:
    """Smallest X (by log det) with X >= A_j Y A_j^T + Z_j for every j"""
    Y_inv = np.linalg.inv(Y)
    Y_inv = (Y_inv + Y_inv.T) / 2
    blocks = [
        (lambda S, A=A, Z=Z: _schur_bound_block(S, Z, A, Y_inv))
        for A, Z in zip(A_list, Z_list)
    ]
    program = MaxDetProgram(
        dim=A_list[0].shape[0], blocks=blocks, objective=objective, epsilon=PSD_EPS, name=name
    )
    solution = solve_maxdet(program, solver)
    X = np.linalg.inv(solution.S)
    return _certify(X, [A @ Y @ A.T + Z for A, Z in zip(A_list, Z_list)])


def closed_loop_vertices(sys: UncertainLTISystem, K: np.ndarray) -> List[np.ndarray]:
    """A_CL at the vertices of Theta"""
    return [sys.A_cl(K, theta) for theta in sys.theta_vertices()]


def iid_variance_bounds(
    sys: UncertainLTISystem,
    K: np.ndarray,
    Sigma_w: np.ndarray,
    T: int,
    objective: str = "logdet",
    solver: str | ConicSolver | None = None,
    computation_logger: Dict | None = None,
) -> VarianceBoundSequence:
    """Variance bounds for i.i.d. noise: V_1 = Sigma_w and
    V_{k+1} >= A_CL(theta) V_k A_CL(theta)^T + Sigma_w on Theta

    Args:
        sys (UncertainLTISystem): the system
        K (np.ndarray): a verified feedback gain
        Sigma_w (np.ndarray): per-step covariance in state space
        T (int): number of steps
        objective (str) ["logdet"]: max-det objective, one of VALID_MAXDET_OBJECTIVE
        solver (str | ConicSolver) [None]: conic solver
        computation_logger (Dict) [None]: a dictionary that will be updated to store computation info

    Returns:
        VarianceBoundSequence: the bounds
    """
    if computation_logger is None:
        computation_logger = {}
    Sigma_w = np.array(Sigma_w, dtype=float, ndmin=2)
    closed_loops = closed_loop_vertices(sys, K)
    start_time = time.time()
    logger.info("computing i.i.d. variance bounds for %s steps...", str(T))
    bounds = [Sigma_w]
    for k in range(1, T):
        bounds.append(
            _bounding_step(
                closed_loops,
                [Sigma_w] * len(closed_loops),
                bounds[-1],
                objective,
                solver,
                f"iid_bound_{k + 1}",
            )
        )
    elapsed_time = time.time() - start_time
    logger.info("i.i.d. variance bounds computed in %s seconds", str(elapsed_time))
    computation_logger["variance bounds time"] = elapsed_time
    sequence = VarianceBoundSequence(bounds=bounds, K=K, kind="iid")
    computation_logger["log det bounds"] = sequence.log_dets()
    return sequence


def inner_bound(
    A_cl_vertices: List[np.ndarray],
    Y_head: np.ndarray,
    allow_fallback: bool = True,
    objective: str = "logdet",
    solver: str | ConicSolver | None = None,
) -> np.ndarray:
    """Bound D_1 >= A_I(theta) Y_head A_I(theta)^T on Theta, A_I = [A_CL(theta), I]

    The cross part A_CL Y_12 + Y_21 A_CL^T + Y_22 must be positive definite
    at every vertex. When it is not, and allow_fallback is set, it is
    replaced by itself plus (|lambda_min| + 1e-6) I, the same shift at every
    vertex.

    Raises:
        CorrelationBoundViolated: if the cross part is not positive definite
            and allow_fallback is False
    """
    n = A_cl_vertices[0].shape[0]
    Y_head = (Y_head + Y_head.T) / 2
    Y11 = Y_head[:n, :n]
    Y12 = Y_head[:n, n:]
    Y21 = Y_head[n:, :n]
    Y22 = Y_head[n:, n:]
    crosses = [A @ Y12 + Y21 @ A.T + Y22 for A in A_cl_vertices]
    crosses = [(X + X.T) / 2 for X in crosses]
    min_eig = min(float(np.min(np.linalg.eigvalsh(X))) for X in crosses)
    if min_eig <= 0:
        if not allow_fallback:
            raise CorrelationBoundViolated(
                f"cross term not positive definite (min eigenvalue {min_eig})"
            )
        shift = abs(min_eig) + CORRELATION_FALLBACK_SHIFT
        logger.warning("cross term not positive definite, shifted by %s", str(shift))
        crosses = [X + shift * np.eye(n) for X in crosses]
    D1 = _bounding_step(A_cl_vertices, crosses, Y11, objective, solver, "inner_bound")
    exact = [
        np.hstack([A, np.eye(n)]) @ Y_head @ np.hstack([A, np.eye(n)]).T for A in A_cl_vertices
    ]
    return _certify(D1, exact)


def outer_bound(
    Y_vertex_list: List[np.ndarray],
    objective: str = "logdet",
    solver: str | ConicSolver | None = None,
) -> np.ndarray:
    """Smallest (by log det) matrix dominating every Y(theta_j)"""
    Y_vertex_list = [(Y + Y.T) / 2 for Y in Y_vertex_list]
    blocks = [(lambda S, Y=Y: cp.bmat([[S, S @ Y], [Y @ S, Y]])) for Y in Y_vertex_list]
    program = MaxDetProgram(
        dim=Y_vertex_list[0].shape[0],
        blocks=blocks,
        objective=objective,
        epsilon=PSD_EPS,
        name="outer_bound",
    )
    solution = solve_maxdet(program, solver)
    return _certify(np.linalg.inv(solution.S), Y_vertex_list)


def correlated_bound_at(
    A_cl_vertices: List[np.ndarray],
    Sigma_W: np.ndarray,
    k: int,
    allow_fallback: bool = True,
    objective: str = "logdet",
    solver: str | ConicSolver | None = None,
) -> np.ndarray:
    """Bound on var[e_k] for correlated noise, by sequential factorization
    of e_k = A_CL(..(A_CL w_0 + w_1)..) + w_{k-1}

    Args:
        A_cl_vertices (List[np.ndarray]): A_CL at the vertices of Theta
        Sigma_W (np.ndarray): full covariance of the stacked noise
        k (int): time step, k >= 1

    Returns:
        np.ndarray: the bound on var[e_k]
    """
    n = A_cl_vertices[0].shape[0]
    Y_bar = Sigma_W[: k * n, : k * n]
    for i in range(k, 1, -1):
        head = Y_bar[: 2 * n, : 2 * n]
        D1 = inner_bound(A_cl_vertices, head, allow_fallback, objective, solver)
        if i == 2:
            Y_bar = D1
            break
        tail_cross = Y_bar[: 2 * n, 2 * n :]
        tail = Y_bar[2 * n :, 2 * n :]
        Y_vertices = []
        for A in A_cl_vertices:
            A_I = np.hstack([A, np.eye(n)])
            Y_vertices.append(
                np.block([[D1, A_I @ tail_cross], [tail_cross.T @ A_I.T, tail]])
            )
        if all(np.array_equal(Y_vertices[0], Y) for Y in Y_vertices[1:]):
            Y_bar = Y_vertices[0]
        else:
            Y_bar = outer_bound(Y_vertices, objective, solver)
    return Y_bar[:n, :n]


def _correlated_bound_task(args) -> np.ndarray:
    return correlated_bound_at(*args)


def correlated_variance_bounds(
    sys: UncertainLTISystem,
    K: np.ndarray,
    Sigma_W: np.ndarray,
    T: int,
    allow_fallback: bool = True,
    objective: str = "logdet",
    solver: str | None = None,
    jobs: int = 1,
    computation_logger: Dict | None = None,
) -> VarianceBoundSequence:
    """Variance bounds for correlated noise with full covariance Sigma_W

    Each k is independent and the bounds are computed in a process pool
    when jobs > 1.
    """
    if computation_logger is None:
        computation_logger = {}
    Sigma_W = np.array(Sigma_W, dtype=float, ndmin=2)
    if Sigma_W.shape[0] < T * sys.n:
        raise RSMPCException(
            f"full covariance has size {Sigma_W.shape[0]}, at least {T * sys.n} needed"
        )
    closed_loops = closed_loop_vertices(sys, K)
    start_time = time.time()
    logger.info("computing correlated variance bounds for %s steps...", str(T))
    tasks = [(closed_loops, Sigma_W, k, allow_fallback, objective, solver) for k in range(1, T + 1)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            bounds = list(pool.map(_correlated_bound_task, tasks))
    else:
        bounds = []
        for task in tasks:
            bounds.append(_correlated_bound_task(task))
            logger.info("bound for k=%s computed", str(task[2]))
    elapsed_time = time.time() - start_time
    logger.info("correlated variance bounds computed in %s seconds", str(elapsed_time))
    computation_logger["variance bounds time"] = elapsed_time
    sequence = VarianceBoundSequence(bounds=bounds, K=K, kind="full")
    computation_logger["log det bounds"] = sequence.log_dets()
    return sequence


def variance_bounds(
    sys: UncertainLTISystem,
    K: np.ndarray,
    noise: NoiseModel,
    allow_fallback: bool = True,
    objective: str = "logdet",
    solver: str | None = None,
    jobs: int = 1,
    computation_logger: Dict | None = None,
) -> VarianceBoundSequence:
    """Dispatches to the i.i.d. or correlated synthesis according to the noise model,
    which must already be expressed in state space"""
    if noise.dim != sys.n:
        raise RSMPCException("noise must be mapped into state space before synthesis")
    if noise.covariance_kind == "iid":
        return iid_variance_bounds(
            sys, K, noise.covariance, noise.T, objective, solver, computation_logger
        )
    return correlated_variance_bounds(
        sys,
        K,
        noise.covariance,
        noise.T,
        allow_fallback,
        objective,
        solver,
        jobs,
        computation_logger,
    )


def exact_error_variance(A_cl: np.ndarray, Sigma_W: np.ndarray, k: int) -> np.ndarray:
    """var[e_k] for a fixed closed loop matrix: M Sigma_W[:kn,:kn] M^T with
    M = [A^{k-1}, ..., A, I]"""
    n = A_cl.shape[0]
    if k <= 0:
        return np.zeros((n, n))
    powers = [np.linalg.matrix_power(A_cl, k - 1 - i) for i in range(k)]
    M = np.hstack(powers)
    return M @ Sigma_W[: k * n, : k * n] @ M.T


def loewner_residuals(
    sequence: VarianceBoundSequence,
    sys: UncertainLTISystem,
    noise: NoiseModel,
    K: np.ndarray | None = None,
) -> np.ndarray:
    """min over the vertices of Theta of min eig(V_k - var[e_k](theta_j)), k = 1..T"""
    K = sequence.K if K is None else K
    Sigma_W = noise.full_covariance()
    closed_loops = closed_loop_vertices(sys, K)
    residuals = []
    for k in range(1, sequence.T + 1):
        gaps = [sequence.bound(k) - exact_error_variance(A, Sigma_W, k) for A in closed_loops]
        residuals.append(min(float(np.min(np.linalg.eigvalsh(gap))) for gap in gaps))
    return np.array(residuals)
