"""terminal set for the homothetic tube, as a polytope over (s, alpha)

The candidate terminal map is s+ = A_CL(theta_c) s, theta_c the Chebyshev
center of Theta, with alpha+ the smallest scaling covering
A_CL(theta) ({s} (+) alpha Z) for every theta in Theta. That scaling is the
max of the affine pieces H_z[l] (A_CL(theta_t) (s + alpha z_j) - s+) over the
vertices theta_t of Theta, the vertices z_j of Z and the rows l of H_z.
The terminal set is the largest subset of the stage-feasible (s, alpha)
polytope from which some admissible alpha+ keeps (s+, alpha+) in the set.
"""

import logging
import os
import time
from dataclasses import dataclass
from typing import Dict, NamedTuple

import numpy as np
from scipy.optimize import linprog

from rsmpc.constants import (
    ARTIFACT_FORMAT_VERSION,
    FACET_TOL,
    RESIDUAL_TOL,
    TERMINAL_BOX,
    TERMINAL_MAX_ITER,
)
from rsmpc.model import UncertainLTISystem
from rsmpc.polytope import Polytope, polytope_from_dict
from rsmpc.tube.homothetic import containment_residual
from rsmpc.util._utils import load_json, save_json
from rsmpc.util.custom_exceptions import RSMPCException, TerminalSetEmpty

logger = logging.getLogger("rsmpc_terminal")

_TERMINAL_FILE = "terminal_set.json"


@dataclass
class TerminalSet:
    """terminal set over (s, alpha) in R^{n+1}, rows normalized to offsets
    1 (or 0 for homogeneous rows such as alpha >= 0)"""

    polytope: Polytope
    stage: Polytope
    theta_center: np.ndarray
    iterations: int = 0
    converged: bool = True

    @property
    def H(self) -> np.ndarray:
        return self.polytope.H

    @property
    def h(self) -> np.ndarray:
        return self.polytope.h

    @property
    def n(self) -> int:
        """state dimension"""
        return self.polytope.dim - 1

    def contains(self, s, alpha: float, tol: float = RESIDUAL_TOL) -> bool:
        """membership of (s, alpha)"""
        point = np.concatenate([np.asarray(s, dtype=float).reshape(-1), [alpha]])
        return self.polytope.contains(point, tol)

    def to_dict(self) -> Dict:
        return {
            "version": ARTIFACT_FORMAT_VERSION,
            "polytope": self.polytope.to_dict(),
            "stage": self.stage.to_dict(),
            "theta_center": self.theta_center.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
        }

    def save_to_folder(self, folder_path: str) -> None:
        """Saves the set in the polytope JSON schema (dimension n+1)"""
        if not os.path.exists(folder_path):
            os.makedirs(folder_path)
        save_json(self.to_dict(), os.path.join(folder_path, _TERMINAL_FILE))


def terminal_set_load_from_folder(folder_path: str) -> TerminalSet:
    """Loads a set saved with TerminalSet.save_to_folder"""
    data = load_json(os.path.join(folder_path, _TERMINAL_FILE))
    if data.get("version") != ARTIFACT_FORMAT_VERSION:
        raise RSMPCException(f"unsupported terminal set format {data.get('version')}")
    return TerminalSet(
        polytope_from_dict(data["polytope"]),
        polytope_from_dict(data["stage"]),
        np.array(data["theta_center"], dtype=float),
        data["iterations"],
        data["converged"],
    )


class Successor(NamedTuple):
    """candidate successor of a terminal pair"""

    s: np.ndarray
    alpha: float
    admissible: bool


def _normalize_rows(H: np.ndarray, h: np.ndarray) -> Polytope:
    """offsets to +-1, homogeneous rows to unit norm"""
    scale = np.where(np.abs(h) > FACET_TOL, np.abs(h), np.linalg.norm(H, axis=1))
    scale[scale == 0] = 1.0
    h_scaled = h / scale
    h_scaled[np.abs(h) <= FACET_TOL] = 0.0
    return Polytope(H / scale.reshape(-1, 1), h_scaled)


def stage_set(
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    f_inf: np.ndarray,
    g_inf: np.ndarray,
    box: float = TERMINAL_BOX,
) -> Polytope:
    """(s, alpha) with {s} (+) alpha Z inside the tightened state set and
    K ({s} (+) alpha Z) inside the tightened input set, alpha >= 0.

    A box |s_i|, alpha <= box is added when the set is unbounded.
    """
    n = sys.n
    F = sys.X.H
    G = sys.U.H
    f_bar = base.support_rows(F)
    g_bar = base.support_rows(G @ K)
    H = np.vstack(
        [
            np.hstack([F, f_bar.reshape(-1, 1)]),
            np.hstack([G @ K, g_bar.reshape(-1, 1)]),
            np.hstack([np.zeros((1, n)), -np.ones((1, 1))]),
        ]
    )
    h = np.concatenate([sys.X.h - f_inf, sys.U.h - g_inf, [0.0]])
    stage = Polytope(H, h)
    if not stage.is_empty() and not stage.is_bounded():
        logger.info("stage set unbounded, adding a box of size %s", str(box))
        stage = stage.intersect(Polytope.from_box(-box * np.ones(n + 1), box * np.ones(n + 1)))
    return _normalize_rows(stage.H, stage.h)


def alpha_pieces(
    sys: UncertainLTISystem, K: np.ndarray, base: Polytope, theta_center: np.ndarray
):
    """affine pieces (C, e) with minimal alpha+ = max(C s + e alpha)"""
    A_c = sys.A_cl(K, theta_center)
    H_z = base.H
    C = []
    e = []
    for theta in sys.theta_vertices():
        A_t = sys.A_cl(K, theta)
        C_t = H_z @ (A_t - A_c)
        for z in base.vertices():
            e_tz = H_z @ (A_t @ z)
            C.append(C_t)
            e.append(e_tz)
    C = np.vstack(C)
    e = np.concatenate(e)
    pieces = np.unique(np.hstack([C, e.reshape(-1, 1)]).round(12), axis=0)
    return pieces[:, :-1], pieces[:, -1]


def _prune_pieces(C: np.ndarray, e: np.ndarray, region: Polytope):
    """drops pieces that never attain the max over region"""
    if len(e) <= 1:
        return C, e
    keep = []
    dim = region.dim
    for i in range(len(e)):
        others = [j for j in range(len(e)) if j != i]
        # max t s.t. t <= piece_i - piece_j for every j, x in region
        A_ub = [
            np.concatenate([-(np.append(C[i], e[i]) - np.append(C[j], e[j])), [1.0]])
            for j in others
        ]
        A_ub += [np.concatenate([row, [0.0]]) for row in region.H]
        b_ub = np.concatenate([np.zeros(len(others)), region.h])
        c = np.zeros(dim + 1)
        c[-1] = -1.0
        result = linprog(
            c, A_ub=np.array(A_ub), b_ub=b_ub, bounds=[(None, None)] * (dim + 1), method="highs"
        )
        if result.status != 0 or -result.fun > -FACET_TOL:
            keep.append(i)
    return C[keep], e[keep]


def _pre_set(
    omega: Polytope, A_c: np.ndarray, C: np.ndarray, e: np.ndarray
) -> Polytope:
    """{(s, alpha) | exists alpha+ >= max(C s + e alpha) with (A_c s, alpha+) in omega},
    with alpha+ eliminated by Fourier-Motzkin"""
    n = A_c.shape[0]
    a_s = omega.H[:, :n] @ A_c
    a_alpha = omega.H[:, n]
    h = omega.h
    # rows in (s, alpha, alpha+)
    lower = [np.concatenate([C[i], [e[i]], [-1.0], [0.0]]) for i in range(len(e))]
    upper = []
    plain = []
    for row_s, coef, offset in zip(a_s, a_alpha, h):
        if coef > FACET_TOL:
            upper.append(np.concatenate([row_s, [0.0], [coef], [offset]]))
        elif coef < -FACET_TOL:
            lower.append(np.concatenate([row_s, [0.0], [coef], [offset]]))
        else:
            plain.append(np.concatenate([row_s, [0.0], [offset]]))
    rows = list(plain)
    for lo in lower:
        for up in upper:
            # lo: a_l x - |c_l| alpha+ <= b_l, up: a_u x + c_u alpha+ <= b_u
            c_l = -lo[n + 1]
            c_u = up[n + 1]
            combined = c_u * lo + c_l * up
            rows.append(np.concatenate([combined[: n + 1], [combined[n + 2]]]))
    rows = np.array(rows).reshape(-1, n + 2)
    return Polytope(rows[:, : n + 1], rows[:, n + 1])


def terminal_set(
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    f_inf: np.ndarray,
    g_inf: np.ndarray,
    max_iter: int = TERMINAL_MAX_ITER,
    box: float = TERMINAL_BOX,
    computation_logger: Dict | None = None,
) -> TerminalSet:
    """Largest invariant subset of the stage set under the candidate terminal
    map, by backward iteration Omega <- Omega & Pre(Omega)

    Args:
        sys (UncertainLTISystem): the system
        K (np.ndarray): verified feedback gain
        base (Polytope): unit-offset base set of the tube
        f_inf, g_inf (np.ndarray): worst state and input tightening
        max_iter (int) [TERMINAL_MAX_ITER]: iteration cap
        box (float) [TERMINAL_BOX]: bounding box for unbounded stage sets
        computation_logger (Dict) [None]: a dictionary that will be updated to store computation info

    Raises:
        TerminalSetEmpty: if the stage set or an iterate is empty
    """
    if computation_logger is None:
        computation_logger = {}
    start_time = time.time()
    logger.info("computing terminal set...")
    theta_center, _ = sys.Theta.chebyshev_center()
    stage = stage_set(sys, K, base, f_inf, g_inf, box)
    if stage.is_empty():
        raise TerminalSetEmpty("the tightened stage set is empty")
    A_c = sys.A_cl(K, theta_center)
    C, e = alpha_pieces(sys, K, base, theta_center)
    C, e = _prune_pieces(C, e, stage)
    logger.info("terminal map has %s affine pieces", str(len(e)))
    omega = stage.minimal()
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        pre = _pre_set(omega, A_c, C, e)
        new_rows = [
            i
            for i in range(len(pre))
            if omega.support(pre.H[i]) > pre.h[i] + FACET_TOL * max(1.0, abs(pre.h[i]))
        ]
        if len(new_rows) == 0:
            converged = True
            break
        omega = omega.intersect(Polytope(pre.H[new_rows], pre.h[new_rows]))
        if omega.is_empty():
            raise TerminalSetEmpty(f"terminal set iteration {iteration} is empty")
        omega = omega.minimal()
        omega = _normalize_rows(omega.H, omega.h)
        logger.debug("terminal iteration %s: %s rows", str(iteration), str(len(omega)))
    if not converged:
        logger.warning("terminal set iteration stopped after %s iterations", str(max_iter))
    elapsed_time = time.time() - start_time
    logger.info("terminal set computed in %s seconds", str(elapsed_time))
    computation_logger["terminal set time"] = elapsed_time
    computation_logger["terminal set iterations"] = iteration
    return TerminalSet(
        _normalize_rows(omega.H, omega.h), stage, np.asarray(theta_center), iteration, converged
    )


def successor(
    ts: TerminalSet, sys: UncertainLTISystem, K: np.ndarray, base: Polytope, s, alpha: float
) -> Successor:
    """candidate successor (s+, alpha+) of a terminal pair, with alpha+ the
    smallest admissible scaling keeping (s+, alpha+) in the terminal set

    When no admissible scaling exists, alpha+ is the minimal covering
    scaling and admissible is False.
    """
    s = np.asarray(s, dtype=float).reshape(-1)
    A_c = sys.A_cl(K, ts.theta_center)
    s_plus = A_c @ s
    C, e = alpha_pieces(sys, K, base, ts.theta_center)
    alpha_min = max(float(np.max(C @ s + e * alpha)), 0.0)
    n = sys.n
    b_ub = ts.h - ts.H[:, :n] @ s_plus
    result = linprog(
        [1.0],
        A_ub=ts.H[:, n].reshape(-1, 1),
        b_ub=b_ub,
        bounds=[(alpha_min, None)],
        method="highs",
    )
    if result.status != 0:
        return Successor(s_plus, alpha_min, False)
    return Successor(s_plus, float(result.x[0]), True)


@dataclass
class InvarianceReport:
    """outcome of the terminal invariance check"""

    passed: bool
    worst_residual: float
    membership_residual: float
    containment_residual: float
    stage_residual: float
    vertices: int


def terminal_invariance_check(
    ts: TerminalSet,
    sys: UncertainLTISystem,
    K: np.ndarray,
    base: Polytope,
    tol: float = RESIDUAL_TOL,
) -> InvarianceReport:
    """Checks every vertex (s, alpha) of the terminal set: its successor must
    lie in the set, robustly contain the image of {s} (+) alpha Z with v = 0,
    and the vertex itself must satisfy the stage constraints"""
    n = sys.n
    membership = -np.inf
    containment = -np.inf
    stage = -np.inf
    vertices = ts.polytope.vertices()
    for vertex in vertices:
        s = vertex[:n]
        alpha = max(float(vertex[n]), 0.0)
        stage = max(stage, float(np.max(ts.stage.H @ vertex - ts.stage.h)))
        nxt = successor(ts, sys, K, base, s, alpha)
        point = np.concatenate([nxt.s, [nxt.alpha]])
        membership = max(membership, float(np.max(ts.H @ point - ts.h)))
        containment = max(
            containment,
            containment_residual(s, alpha, np.zeros(sys.m), nxt.s, nxt.alpha, sys, K, base),
        )
    worst = max(membership, containment, stage)
    passed = worst <= tol
    if not passed:
        logger.warning("terminal invariance check failed with residual %s", str(worst))
    return InvarianceReport(
        passed=passed,
        worst_residual=worst,
        membership_residual=membership,
        containment_residual=containment,
        stage_residual=stage,
        vertices=len(vertices),
    )
