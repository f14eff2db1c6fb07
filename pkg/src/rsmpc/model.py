"""uncertain linear system, feedback gain certificates and terminal weight"""

import logging
from dataclasses import dataclass
from typing import Dict, List

import cvxpy as cp
import numpy as np
from scipy.linalg import solve_discrete_are

from rsmpc.constants import GAIN_EIG_TOL, INFEASIBLE, PSD_EPS
from rsmpc.polytope import Polytope, polytope_from_dict
from rsmpc.solvers.conic import solve_conic
from rsmpc.solvers.programs import ConicProgram, ConstraintBlock
from rsmpc.solvers.solver import ConicSolver
from rsmpc.util.custom_exceptions import (
    EmptyPolytope,
    InvalidProbability,
    NotQuadraticallyStable,
    RSMPCException,
    SynthesisInfeasible,
    TerminalWeightInfeasible,
    UnboundedDirection,
)

# margin of the strict Lyapunov LMIs, relative to P >= I
_GAIN_LMI_MARGIN = 1e-6

logger = logging.getLogger("rsmpc_model")


class UncertainLTISystem:
    """x+ = A(theta) x + B(theta) u + B_w w, with A(theta) = A_0 + sum_i theta_i A_i
    and B(theta) = B_0 + sum_i theta_i B_i for theta in the polytope Theta.

    X = {x | F x <= 1} and U = {u | G u <= 1} are the chance constraint sets,
    to be satisfied row by row with probabilities p_x and p_u.
    """

    A_list: List[np.ndarray]
    B_list: List[np.ndarray]
    Theta: Polytope
    X: Polytope
    U: Polytope
    p_x: float
    p_u: float
    B_w: np.ndarray

    def __init__(
        self,
        A_list: List[np.ndarray],
        B_list: List[np.ndarray],
        Theta: Polytope,
        X: Polytope,
        U: Polytope,
        p_x: float,
        p_u: float,
        B_w: np.ndarray | None = None,
    ) -> None:
        """Builds the system and checks its invariants

        Raises:
            RSMPCException: on inconsistent dimensions
            EmptyPolytope: if Theta is empty
            UnboundedDirection: if Theta is unbounded
            InvalidProbability: if p_x or p_u is not in (0, 1)
        """
        self.A_list = [np.array(A, dtype=float, ndmin=2) for A in A_list]
        self.B_list = [np.array(B, dtype=float, ndmin=2) for B in B_list]
        if len(self.A_list) != len(self.B_list) or len(self.A_list) == 0:
            raise RSMPCException("A_list and B_list must have the same positive length")
        n = self.A_list[0].shape[0]
        m = self.B_list[0].shape[1]
        for A in self.A_list:
            if A.shape != (n, n):
                raise RSMPCException(f"A matrices must be {n}x{n}, got {A.shape}")
        for B in self.B_list:
            if B.shape != (n, m):
                raise RSMPCException(f"B matrices must be {n}x{m}, got {B.shape}")
        if Theta.dim != len(self.A_list) - 1:
            raise RSMPCException(
                f"Theta has dimension {Theta.dim} but {len(self.A_list) - 1} "
                "parametric matrices were given"
            )
        if Theta.is_empty():
            raise EmptyPolytope("the uncertainty set Theta is empty")
        if not Theta.is_bounded():
            raise UnboundedDirection("the uncertainty set Theta is unbounded")
        if X.dim != n or U.dim != m:
            raise RSMPCException("constraint sets do not match the state/input dimensions")
        for name, value in (("p_x", p_x), ("p_u", p_u)):
            if not 0.0 < value < 1.0:
                raise InvalidProbability(f"{name} must be in (0,1), got {value}")
        self.Theta = Theta
        self.X = _normalize_constraint_set(X, "X")
        self.U = _normalize_constraint_set(U, "U")
        self.p_x = float(p_x)
        self.p_u = float(p_u)
        self.B_w = np.eye(n) if B_w is None else np.array(B_w, dtype=float, ndmin=2)
        if self.B_w.shape[0] != n:
            raise RSMPCException(f"B_w must have {n} rows, got {self.B_w.shape}")

    @property
    def n(self) -> int:
        """state dimension"""
        return self.A_list[0].shape[0]

    @property
    def m(self) -> int:
        """input dimension"""
        return self.B_list[0].shape[1]

    @property
    def p(self) -> int:
        """parameter dimension"""
        return len(self.A_list) - 1

    def A(self, theta) -> np.ndarray:
        """A(theta)"""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return self.A_list[0] + sum(t * A for t, A in zip(theta, self.A_list[1:]))

    def B(self, theta) -> np.ndarray:
        """B(theta)"""
        theta = np.asarray(theta, dtype=float).reshape(-1)
        return self.B_list[0] + sum(t * B for t, B in zip(theta, self.B_list[1:]))

    def A_cl(self, K: np.ndarray, theta) -> np.ndarray:
        """closed loop matrix A(theta) + B(theta) K"""
        return self.A(theta) + self.B(theta) @ K

    def theta_vertices(self) -> np.ndarray:
        """vertices of Theta, one per row"""
        return self.Theta.vertices()

    def D(self, a, b) -> np.ndarray:
        """n x p matrix with columns A_i a + B_i b, i = 1..p"""
        a = np.asarray(a, dtype=float).reshape(-1)
        b = np.asarray(b, dtype=float).reshape(-1)
        columns = [A @ a + B @ b for A, B in zip(self.A_list[1:], self.B_list[1:])]
        if len(columns) == 0:
            return np.zeros((self.n, 0))
        return np.column_stack(columns)

    def with_singleton_theta(self, theta_bar) -> "UncertainLTISystem":
        """The same system with Theta = {theta_bar}, i.e. with mismatch ignored"""
        return UncertainLTISystem(
            self.A_list,
            self.B_list,
            Polytope.from_point(theta_bar),
            self.X,
            self.U,
            self.p_x,
            self.p_u,
            self.B_w,
        )

    def to_dict(self) -> Dict:
        """JSON-compatible description, matrices row-major"""
        return {
            "A": [A.tolist() for A in self.A_list],
            "B": [B.tolist() for B in self.B_list],
            "B_w": self.B_w.tolist(),
            "Theta": self.Theta.to_dict(),
            "X": self.X.to_dict(),
            "U": self.U.to_dict(),
            "p_x": self.p_x,
            "p_u": self.p_u,
        }


def system_from_dict(data: Dict) -> UncertainLTISystem:
    """Builds a system from the dictionary produced by UncertainLTISystem.to_dict

    Raises:
        RSMPCException: if a required key is missing
    """
    for key in ("A", "B", "Theta", "X", "U", "p_x", "p_u"):
        if key not in data:
            raise RSMPCException(f"system description is missing '{key}'")
    return UncertainLTISystem(
        [np.array(A, dtype=float, ndmin=2) for A in data["A"]],
        [np.array(B, dtype=float, ndmin=2) for B in data["B"]],
        polytope_from_dict(data["Theta"]),
        polytope_from_dict(data["X"]),
        polytope_from_dict(data["U"]),
        data["p_x"],
        data["p_u"],
        data.get("B_w"),
    )


def D_map(a, b, sys: UncertainLTISystem) -> np.ndarray:
    """columns [A_i a + B_i b] for i = 1..p"""
    return sys.D(a, b)


def _normalize_constraint_set(P: Polytope, name: str) -> Polytope:
    normalized, changed = P.normalized()
    if changed:
        logger.warning("constraint set %s rescaled to unit offsets", name)
    return normalized


@dataclass(frozen=True)
class FeedbackGain:
    """state feedback u = K x with a common Lyapunov certificate P"""

    K: np.ndarray
    P_lyap: np.ndarray


def _schur_lyapunov(P, A_cl):
    return cp.bmat([[P, A_cl.T @ P], [P @ A_cl, P]])


def lyapunov_margin(P: np.ndarray, A_cl: np.ndarray) -> float:
    """min eigenvalue of [P, A^T P; P A, P] with P scaled to unit norm"""
    P = P / np.linalg.norm(P, 2)
    block = np.block([[P, A_cl.T @ P], [P @ A_cl, P]])
    return float(np.min(np.linalg.eigvalsh((block + block.T) / 2)))


def verify_gain(
    sys: UncertainLTISystem,
    K: np.ndarray,
    solver: str | ConicSolver | None = None,
) -> FeedbackGain:
    """Finds a common Lyapunov certificate for A(theta) + B(theta) K over Theta

    The Schur form of the Lyapunov inequality is affine in theta, so it is
    imposed at the vertices of Theta only.

    Args:
        sys (UncertainLTISystem): the system
        K (np.ndarray): the m x n gain
        solver (str | ConicSolver) [None]: conic solver

    Returns:
        FeedbackGain: K and its certificate

    Raises:
        NotQuadraticallyStable: if no certificate exists
    """
    K = np.array(K, dtype=float, ndmin=2).reshape(sys.m, sys.n)
    P = cp.Variable((sys.n, sys.n), symmetric=True, name="P")
    blocks = [ConstraintBlock("psd", P - np.eye(sys.n), name="normalization")]
    closed_loops = [sys.A_cl(K, theta) for theta in sys.theta_vertices()]
    for j, A_cl in enumerate(closed_loops):
        blocks.append(
            ConstraintBlock(
                "psd", _schur_lyapunov(P, A_cl), name=f"lyapunov_{j}", epsilon=_GAIN_LMI_MARGIN
            )
        )
    program = ConicProgram({"P": P}, objective=cp.trace(P), blocks=blocks, name="verify_gain")
    solution = solve_conic(program, solver)
    if solution.status == INFEASIBLE:
        raise NotQuadraticallyStable("no common Lyapunov certificate for the given gain")
    solution.raise_for_status()
    P_lyap = (solution.values["P"] + solution.values["P"].T) / 2
    for j, A_cl in enumerate(closed_loops):
        margin = lyapunov_margin(P_lyap, A_cl)
        if margin < GAIN_EIG_TOL:
            raise NotQuadraticallyStable(
                f"Lyapunov certificate fails at vertex {j} with margin {margin}"
            )
    logger.info("gain verified on %s vertices of Theta", str(len(closed_loops)))
    return FeedbackGain(K=K, P_lyap=P_lyap)


def synthesize_gain(
    sys: UncertainLTISystem, solver: str | ConicSolver | None = None
) -> FeedbackGain:
    """Synthesizes a quadratically stabilizing gain with the change of variables
    Y = P^-1, L = K Y

    Raises:
        SynthesisInfeasible: if the synthesis LMIs are infeasible or the
            resulting gain cannot be verified
    """
    Y = cp.Variable((sys.n, sys.n), symmetric=True, name="Y")
    L = cp.Variable((sys.m, sys.n), name="L")
    blocks = [ConstraintBlock("psd", Y - np.eye(sys.n), name="normalization")]
    for j, theta in enumerate(sys.theta_vertices()):
        AYBL = sys.A(theta) @ Y + sys.B(theta) @ L
        blocks.append(
            ConstraintBlock(
                "psd",
                cp.bmat([[Y, AYBL.T], [AYBL, Y]]),
                name=f"synthesis_{j}",
                epsilon=_GAIN_LMI_MARGIN,
            )
        )
    program = ConicProgram(
        {"Y": Y, "L": L}, objective=cp.trace(Y), blocks=blocks, name="synthesize_gain"
    )
    solution = solve_conic(program, solver)
    if solution.status == INFEASIBLE:
        raise SynthesisInfeasible("gain synthesis LMIs are infeasible")
    solution.raise_for_status()
    K = solution.values["L"] @ np.linalg.inv(solution.values["Y"])
    try:
        return verify_gain(sys, K, solver)
    except NotQuadraticallyStable as e:
        raise SynthesisInfeasible(f"synthesized gain failed verification: {e}") from e


def lqr_gain(
    sys: UncertainLTISystem,
    Q: np.ndarray,
    R: np.ndarray,
    theta=None,
) -> np.ndarray:
    """Infinite horizon LQR gain for the model at theta (Chebyshev center of
    Theta by default), in the convention u = K x"""
    if theta is None:
        theta, _ = sys.Theta.chebyshev_center()
    A = sys.A(theta)
    B = sys.B(theta)
    Q = np.array(Q, dtype=float, ndmin=2)
    R = np.array(R, dtype=float, ndmin=2)
    P = solve_discrete_are(A, B, Q, R)
    return -np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)


def terminal_weight(
    sys: UncertainLTISystem,
    K: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    solver: str | ConicSolver | None = None,
) -> np.ndarray:
    """Minimum trace P with A_CL(theta)^T P A_CL(theta) - P <= -Q - K^T R K on Theta

    Raises:
        TerminalWeightInfeasible: if the LMIs are infeasible
    """
    K = np.array(K, dtype=float, ndmin=2).reshape(sys.m, sys.n)
    Q_bar = np.array(Q, dtype=float, ndmin=2) + K.T @ np.array(R, dtype=float, ndmin=2) @ K
    P = cp.Variable((sys.n, sys.n), symmetric=True, name="P")
    blocks = [ConstraintBlock("psd", P, name="positivity", epsilon=PSD_EPS)]
    for j, theta in enumerate(sys.theta_vertices()):
        A_cl = sys.A_cl(K, theta)
        blocks.append(
            ConstraintBlock(
                "psd",
                cp.bmat([[P - Q_bar, A_cl.T @ P], [P @ A_cl, P]]),
                name=f"decrease_{j}",
                epsilon=PSD_EPS,
            )
        )
    program = ConicProgram({"P": P}, objective=cp.trace(P), blocks=blocks, name="terminal_weight")
    solution = solve_conic(program, solver)
    if solution.status == INFEASIBLE:
        raise TerminalWeightInfeasible("terminal weight LMIs are infeasible")
    solution.raise_for_status()
    return (solution.values["P"] + solution.values["P"].T) / 2


def terminal_weight_residual(
    sys: UncertainLTISystem, K: np.ndarray, Q: np.ndarray, R: np.ndarray, P: np.ndarray
) -> float:
    """max over the vertices of Theta of the largest eigenvalue of
    A_CL^T P A_CL - P + Q + K^T R K (nonpositive when P is valid)"""
    K = np.array(K, dtype=float, ndmin=2).reshape(sys.m, sys.n)
    Q_bar = np.array(Q, dtype=float, ndmin=2) + K.T @ np.array(R, dtype=float, ndmin=2) @ K
    worst = -np.inf
    for theta in sys.theta_vertices():
        A_cl = sys.A_cl(K, theta)
        residual = A_cl.T @ P @ A_cl - P + Q_bar
        worst = max(worst, float(np.max(np.linalg.eigvalsh((residual + residual.T) / 2))))
    return worst


def project_parameter(
    sys: UncertainLTISystem, theta, solver: str | ConicSolver | None = None
) -> np.ndarray:
    """Euclidean projection of theta onto Theta (theta itself when inside)

    Raises:
        SolverFailure: if the projection QP fails
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if sys.Theta.contains(theta):
        return theta
    point = cp.Variable(sys.p, name="theta")
    program = ConicProgram(
        {"theta": point},
        convex_term=cp.sum_squares(point - theta),
        blocks=[ConstraintBlock("nonneg", sys.Theta.h - sys.Theta.H @ point, name="Theta")],
        name="project_parameter",
    )
    solution = solve_conic(program, solver)
    solution.raise_for_status()
    return np.asarray(solution.values["theta"], dtype=float).reshape(-1)
