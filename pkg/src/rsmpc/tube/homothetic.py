"""homothetic tubes {s_i} (+) alpha_i Z and robust containment between them

The successor of a point p of Z_i with input K p + v is
A_0 p + B_0 (K p + v) + w + D(p, K p + v) theta, affine in theta. Containment
of the successor set in {s'} (+) alpha' Z over Theta is decided at the
vertices of Z_i, either row by row with an LP over Theta (primal oracle) or
through the dual multipliers of those LPs (the encoding used by the MPC).
"""

from dataclasses import dataclass
from typing import List

import cvxpy as cp
import numpy as np

from rsmpc.constants import RESIDUAL_TOL
from rsmpc.model import UncertainLTISystem
from rsmpc.polytope import Polytope
from rsmpc.solvers.conic import solve_conic
from rsmpc.solvers.programs import ConicProgram, ConstraintBlock
from rsmpc.solvers.solver import ConicSolver
from rsmpc.util.custom_exceptions import RSMPCException


@dataclass
class HomotheticTube:
    """sets {s_i} (+) alpha_i base for i = 0..N"""

    base: Polytope
    centers: np.ndarray
    scalings: np.ndarray

    def __post_init__(self):
        self.centers = np.array(self.centers, dtype=float, ndmin=2)
        self.scalings = np.array(self.scalings, dtype=float).reshape(-1)
        if self.centers.shape[0] != self.scalings.shape[0]:
            raise RSMPCException("a tube needs as many centers as scalings")
        if np.any(self.scalings < -RESIDUAL_TOL):
            raise RSMPCException("tube scalings must be nonnegative")

    def __len__(self) -> int:
        return self.centers.shape[0]

    def set_at(self, i: int) -> Polytope:
        """the i-th set as a polytope"""
        return self.base.homothet(self.centers[i], max(float(self.scalings[i]), 0.0))

    def contains(self, i: int, x, tol: float = RESIDUAL_TOL) -> bool:
        """H_z (x - s_i) <= alpha_i 1"""
        x = np.asarray(x, dtype=float).reshape(-1)
        return bool(
            np.all(self.base.H @ (x - self.centers[i]) <= self.scalings[i] * self.base.h + tol)
        )


@dataclass
class ContainmentDualData:
    """per base vertex j: D^j (n x p), d^j (n) and the multipliers Lambda^j (r x q)"""

    D: List[np.ndarray]
    d: List[np.ndarray]
    Lambda: List[np.ndarray]
    margin: float

    def stationarity_residual(self, H_z: np.ndarray, H_theta: np.ndarray) -> float:
        """max |H_z D^j - Lambda^j H_theta|"""
        return max(
            float(np.max(np.abs(H_z @ D - L @ H_theta))) for D, L in zip(self.D, self.Lambda)
        )


def _check_base(base: Polytope) -> None:
    if not np.allclose(base.h, 1.0):
        raise RSMPCException("the tube base must have unit offsets")


def containment_residual(
    s,
    alpha: float,
    v,
    s_next,
    alpha_next: float,
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    w_bar=None,
) -> float:
    """max over rows, base vertices and theta in Theta of
    H_z (x+ - s_next) - alpha_next, nonpositive iff the successor set is contained

    Each row is an LP over Theta (the support of Theta along (H_z D^j)^T).
    """
    _check_base(base)
    s = np.asarray(s, dtype=float).reshape(-1)
    s_next = np.asarray(s_next, dtype=float).reshape(-1)
    v = np.asarray(v, dtype=float).reshape(-1)
    w_bar = np.zeros(sys.n) if w_bar is None else np.asarray(w_bar, dtype=float).reshape(-1)
    H_z = base.H
    worst = -np.inf
    for z in base.vertices():
        p_j = s + alpha * z
        r_j = K @ p_j + v
        d_j = sys.A_list[0] @ p_j + sys.B_list[0] @ r_j + w_bar - s_next
        rows = H_z @ sys.D(p_j, r_j)
        sup = sys.Theta.support_rows(rows)
        worst = max(worst, float(np.max(H_z @ d_j + sup - alpha_next)))
    return worst


def containment_check(
    Z_i,
    v,
    Z_next,
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    w_bar=None,
    tol: float = RESIDUAL_TOL,
) -> bool:
    """True iff A_CL(theta) Z_i + B(theta) v (+ w_bar) is inside Z_next for every theta in Theta

    Args:
        Z_i (tuple): (s_i, alpha_i)
        v: nominal input correction
        Z_next (tuple): (s_next, alpha_next)
        sys (UncertainLTISystem): the system
        K (np.ndarray): feedback gain
        base (Polytope): the unit-offset base set
        w_bar [None]: known mean disturbance
        tol (float) [RESIDUAL_TOL]: accepted violation
    """
    s, alpha = Z_i
    s_next, alpha_next = Z_next
    return containment_residual(s, alpha, v, s_next, alpha_next, sys, K, base, w_bar) <= tol


def d_matrix_expression(sys: UncertainLTISystem, a, b) -> cp.Expression:
    """D(a, b) for cvxpy expressions a, b (n x p)"""
    columns = [A @ a + B @ b for A, B in zip(sys.A_list[1:], sys.B_list[1:])]
    return cp.vstack(columns).T


def containment_dual_blocks(
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    s,
    alpha,
    v,
    s_next,
    alpha_next,
    Lambdas: List[cp.Variable],
    w_bar=None,
    slack=None,
    name: str = "containment",
) -> List[ConstraintBlock]:
    """Constraint blocks of the dual containment encoding

    For every base vertex z^j, with p^j = s + alpha z^j and r^j = K p^j + v:
        Lambda^j h_theta + H_z d^j <= alpha_next 1 (+ slack)
        H_z D(p^j, r^j) = Lambda^j H_theta
        Lambda^j >= 0
    Every argument may be a constant or a cvxpy expression, so the same
    blocks serve the standalone LP and the MPC program.
    """
    _check_base(base)
    H_z = base.H
    H_theta = sys.Theta.H
    h_theta = sys.Theta.h
    if w_bar is None:
        w_bar = np.zeros(sys.n)
    blocks = []
    for j, z in enumerate(base.vertices()):
        p_j = s + alpha * z
        r_j = K @ p_j + v
        d_j = sys.A_list[0] @ p_j + sys.B_list[0] @ r_j + w_bar - s_next
        offset = alpha_next * np.ones(H_z.shape[0]) - Lambdas[j] @ h_theta - H_z @ d_j
        if slack is not None:
            offset = offset + slack
        blocks.append(ConstraintBlock("nonneg", offset, name=f"{name}_offset_{j}"))
        blocks.append(
            ConstraintBlock(
                "equality",
                H_z @ d_matrix_expression(sys, p_j, r_j) - Lambdas[j] @ H_theta,
                name=f"{name}_stationarity_{j}",
            )
        )
        blocks.append(ConstraintBlock("nonneg", Lambdas[j], name=f"{name}_multipliers_{j}"))
    return blocks


def dual_containment_margin(
    Z_i,
    v,
    Z_next,
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    w_bar=None,
    solver: str | ConicSolver | None = None,
) -> ContainmentDualData:
    """Solves min t over the dual encoding with the offset rows relaxed by t.

    The optimal t equals the primal containment residual by LP duality.
    """
    s, alpha = Z_i
    s_next, alpha_next = Z_next
    r = base.H.shape[0]
    q = sys.Theta.H.shape[0]
    n_vertices = base.vertices().shape[0]
    Lambdas = [cp.Variable((r, q), name=f"Lambda_{j}") for j in range(n_vertices)]
    t = cp.Variable(name="t")
    blocks = containment_dual_blocks(
        sys,
        K,
        base,
        np.asarray(s, dtype=float).reshape(-1),
        float(alpha),
        np.asarray(v, dtype=float).reshape(-1),
        np.asarray(s_next, dtype=float).reshape(-1),
        float(alpha_next),
        Lambdas,
        w_bar=w_bar,
        slack=t,
    )
    variables = {f"Lambda_{j}": L for j, L in enumerate(Lambdas)}
    variables["t"] = t
    program = ConicProgram(variables, objective=t, blocks=blocks, name="dual_containment")
    solution = solve_conic(program, solver)
    solution.raise_for_status()
    D = []
    d = []
    s = np.asarray(s, dtype=float).reshape(-1)
    for z in base.vertices():
        p_j = s + alpha * z
        r_j = K @ p_j + np.asarray(v, dtype=float).reshape(-1)
        D.append(sys.D(p_j, r_j))
        d.append(
            sys.A_list[0] @ p_j
            + sys.B_list[0] @ r_j
            + (np.zeros(sys.n) if w_bar is None else np.asarray(w_bar, dtype=float))
            - np.asarray(s_next, dtype=float).reshape(-1)
        )
    return ContainmentDualData(
        D=D,
        d=d,
        Lambda=[solution.values[f"Lambda_{j}"] for j in range(n_vertices)],
        margin=float(solution.values["t"]),
    )


def dual_containment_feasible(
    Z_i,
    v,
    Z_next,
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    w_bar=None,
    tol: float = RESIDUAL_TOL,
    solver: str | ConicSolver | None = None,
) -> bool:
    """True iff the dual encoding admits multipliers for (Z_i, v, Z_next)"""
    return dual_containment_margin(Z_i, v, Z_next, sys, K, base, w_bar, solver).margin <= tol
