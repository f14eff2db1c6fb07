"""probabilistic reachable sets of the error and constraint tightening"""

import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
from scipy.stats import chi2

from rsmpc.constants import ARTIFACT_FORMAT_VERSION, VALID_RPRS_SHAPE, VALID_NOISE_FAMILY
from rsmpc.polytope import Polytope
from rsmpc.rprs.variance import VarianceBoundSequence, variance_bounds_load_from_folder
from rsmpc.util._utils import load_json, save_json
from rsmpc.util.custom_exceptions import InvalidProbability, RSMPCException

logger = logging.getLogger("rsmpc_rprs")

_RPRS_FILE = "rprs.json"
_TIGHTENING_FILE = "tightening.json"


def _check_probability(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise InvalidProbability(f"probability level must be in (0,1), got {p}")


def ellipsoid_level(p: float, n: int, family: str) -> float:
    """level p~ with Pr(e^T V^-1 e <= p~) >= p

    n/(1-p) from the multivariate Chebyshev inequality, or the chi-squared
    quantile with n degrees of freedom for gaussian noise.
    """
    _check_probability(p)
    if family == "moment_only":
        return n / (1.0 - p)
    return float(chi2.ppf(p, n))


def halfspace_level(p: float, family: str) -> float:
    """level p~ with Pr(h^T e <= sqrt(p~ h^T V h)) >= p

    1/(1-p) for moment-only noise, the chi-squared quantile with one degree
    of freedom at 2p-1 (the squared normal quantile at p) for gaussian noise.
    Gaussian levels at p <= 1/2 are 0.
    """
    _check_probability(p)
    if family == "moment_only":
        return 1.0 / (1.0 - p)
    if p <= 0.5:
        return 0.0
    return float(chi2.ppf(2.0 * p - 1.0, 1))


def boole_levels(
    p: float, rows: int, family: str, budgets: List[float] | None = None
) -> np.ndarray:
    """per-row half-space levels whose violation probabilities sum to 1-p

    Args:
        p (float): joint probability level
        rows (int): number of half-spaces
        family (str): noise family
        budgets (List[float]) [None]: per-row violation budgets summing to
            at most 1-p. Equal split when None
    """
    _check_probability(p)
    if budgets is None:
        budgets = [(1.0 - p) / rows] * rows
    budgets = np.asarray(budgets, dtype=float)
    if len(budgets) != rows:
        raise RSMPCException(f"{rows} violation budgets needed, got {len(budgets)}")
    if np.any(budgets <= 0) or np.sum(budgets) > 1.0 - p + 1e-12:
        raise InvalidProbability(
            f"violation budgets must be positive and sum to at most {1.0 - p}"
        )
    return np.array([halfspace_level(1.0 - b, family) for b in budgets])


@dataclass
class SetFamily:
    """The per-step sets of one signal (state error or input error)

    shape "ellipsoid": {e | e^T V_k^-1 e <= level}
    shape "halfspaces": one chance constraint per row of directions,
        {e | d^T e <= sqrt(levels[row] d^T V_k d)} each with probability p
    shape "polytope": intersection of the rows above, jointly with probability p
    """

    shape: str
    p: float
    levels: np.ndarray
    directions: np.ndarray

    def offsets(self, V: np.ndarray) -> np.ndarray:
        """per-row offsets sqrt(level d^T V d) for halfspaces / polytope"""
        quad = np.einsum("ij,jk,ik->i", self.directions, V, self.directions)
        return np.sqrt(np.maximum(self.levels * quad, 0.0))

    def polytope(self, V: np.ndarray) -> Polytope:
        """the polytopic set for the bound V"""
        return Polytope(self.directions, self.offsets(V))

    def support_rows(self, V: np.ndarray, normals: np.ndarray) -> np.ndarray:
        """support of the set along every row of normals"""
        if self.shape == "ellipsoid":
            quad = np.einsum("ij,jk,ik->i", normals, V, normals)
            return np.sqrt(np.maximum(float(self.levels[0]) * quad, 0.0))
        if self.shape == "halfspaces":
            if not np.array_equal(normals, self.directions):
                raise RSMPCException("half-space sets only tighten their own rows")
            return self.offsets(V)
        if not np.any(V):
            return np.zeros(len(normals))
        return self.polytope(V).support_rows(normals)

    def to_dict(self) -> Dict:
        return {
            "shape": self.shape,
            "p": self.p,
            "levels": self.levels.tolist(),
            "directions": self.directions.tolist(),
        }


def _set_family_from_dict(data: Dict) -> SetFamily:
    return SetFamily(
        data["shape"],
        data["p"],
        np.array(data["levels"], dtype=float),
        np.array(data["directions"], dtype=float, ndmin=2),
    )


def _build_set_family(
    shape: str,
    p: float,
    family: str,
    dim: int,
    directions: np.ndarray,
    budgets: List[float] | None,
) -> SetFamily:
    directions = np.array(directions, dtype=float, ndmin=2)
    if shape == "ellipsoid":
        levels = np.array([ellipsoid_level(p, dim, family)])
    elif shape == "halfspaces":
        levels = np.full(len(directions), halfspace_level(p, family))
    else:
        levels = boole_levels(p, len(directions), family, budgets)
    return SetFamily(shape, p, levels, directions)


@dataclass
class RPRSSequence:
    """Probabilistic reachable sets of the state error (with p_x) and of the
    input error K e (with p_u) for k = 0..T"""

    shape: str
    family: str
    bounds: VarianceBoundSequence
    state_sets: SetFamily
    input_sets: SetFamily

    @property
    def p_x(self) -> float:
        return self.state_sets.p

    @property
    def p_u(self) -> float:
        return self.input_sets.p

    @property
    def level(self) -> float:
        """p~ of the state sets (first row for row-wise shapes)"""
        return float(self.state_sets.levels[0])

    def contains(self, k: int, e: np.ndarray) -> bool:
        """membership of a state error sample in the k-step set"""
        e = np.asarray(e, dtype=float).reshape(-1)
        V = self.bounds.bound(k)
        if k <= 0:
            return bool(np.allclose(e, 0.0))
        if self.shape == "ellipsoid":
            return float(e @ np.linalg.solve(V, e)) <= self.level
        return bool(np.all(self.state_sets.directions @ e <= self.state_sets.offsets(V)))

    def contains_many(self, k: int, samples: np.ndarray) -> np.ndarray:
        """vectorized membership for samples given one per row"""
        samples = np.atleast_2d(samples)
        V = self.bounds.bound(k)
        if self.shape == "ellipsoid":
            quad = np.einsum("ij,ij->i", samples, np.linalg.solve(V, samples.T).T)
            return quad <= self.level
        offsets = self.state_sets.offsets(V)
        return np.all(samples @ self.state_sets.directions.T <= offsets, axis=1)

    def save_to_folder(self, folder_path: str) -> None:
        """Saves the sets and the underlying bounds into folder_path"""
        if not os.path.exists(folder_path):
            os.makedirs(folder_path)
        self.bounds.save_to_folder(folder_path)
        save_json(
            {
                "version": ARTIFACT_FORMAT_VERSION,
                "shape": self.shape,
                "family": self.family,
                "state_sets": self.state_sets.to_dict(),
                "input_sets": self.input_sets.to_dict(),
            },
            os.path.join(folder_path, _RPRS_FILE),
        )


def rprs_load_from_folder(folder_path: str) -> RPRSSequence:
    """Loads sets saved with RPRSSequence.save_to_folder"""
    data = load_json(os.path.join(folder_path, _RPRS_FILE))
    if data.get("version") != ARTIFACT_FORMAT_VERSION:
        raise RSMPCException(f"unsupported RPRS format {data.get('version')}")
    return RPRSSequence(
        data["shape"],
        data["family"],
        variance_bounds_load_from_folder(folder_path),
        _set_family_from_dict(data["state_sets"]),
        _set_family_from_dict(data["input_sets"]),
    )


def build_rprs(
    bounds: VarianceBoundSequence,
    shape: str,
    p: float,
    family: str,
    F: np.ndarray | None = None,
    G: np.ndarray | None = None,
    p_u: float | None = None,
    state_budgets: List[float] | None = None,
    input_budgets: List[float] | None = None,
) -> RPRSSequence:
    """Builds the k-step sets from the variance bounds

    Args:
        bounds (VarianceBoundSequence): the variance bounds
        shape (str): one of VALID_RPRS_SHAPE
        p (float): state probability level p_x
        family (str): one of VALID_NOISE_FAMILY
        F (np.ndarray) [None]: state normals for the row-wise shapes, the
            axis directions +-e_i when None
        G (np.ndarray) [None]: input normals, axis directions when None
        p_u (float) [None]: input probability level, p when None
        state_budgets, input_budgets (List[float]) [None]: per-row violation
            budgets for the polytope shape

    Raises:
        InvalidProbability: if a level is outside (0,1)
    """
    if shape not in VALID_RPRS_SHAPE:
        raise RSMPCException(f"Invalid RPRS shape {shape}")
    if family not in VALID_NOISE_FAMILY:
        raise RSMPCException(f"Invalid noise family {family}")
    p_u = p if p_u is None else p_u
    _check_probability(p)
    _check_probability(p_u)
    n = bounds.n
    m = bounds.K.shape[0]
    if F is None:
        F = np.vstack([np.eye(n), -np.eye(n)])
    if G is None:
        G = np.vstack([np.eye(m), -np.eye(m)])
    state_sets = _build_set_family(shape, p, family, n, F, state_budgets)
    input_sets = _build_set_family(shape, p_u, family, m, G, input_budgets)
    logger.info(
        "built %s RPRS with level %s (%s noise)", shape, str(state_sets.levels[0]), family
    )
    return RPRSSequence(shape, family, bounds, state_sets, input_sets)


@dataclass
class TighteningTable:
    """f_k (state rows) and g_k (input rows) for k = 0..T, with k beyond T
    clamped to T. Row 0 is zero since e_0 = 0."""

    f: np.ndarray
    g: np.ndarray
    state_empty: np.ndarray = field(default=None)
    input_empty: np.ndarray = field(default=None)

    def __post_init__(self):
        self.f = np.array(self.f, dtype=float, ndmin=2)
        self.g = np.array(self.g, dtype=float, ndmin=2)
        if self.state_empty is None:
            self.state_empty = np.any(self.f > 1.0, axis=1)
        if self.input_empty is None:
            self.input_empty = np.any(self.g > 1.0, axis=1)
        self.state_empty = np.asarray(self.state_empty, dtype=bool)
        self.input_empty = np.asarray(self.input_empty, dtype=bool)

    @property
    def T(self) -> int:
        return self.f.shape[0] - 1

    def f_at(self, k: int) -> np.ndarray:
        return self.f[min(max(k, 0), self.T)]

    def g_at(self, k: int) -> np.ndarray:
        return self.g[min(max(k, 0), self.T)]

    def any_empty(self) -> bool:
        """True if some tightened set is empty"""
        return bool(np.any(self.state_empty) or np.any(self.input_empty))

    def worst(self, k_max: int | None = None):
        """elementwise max of f_k and g_k over k = 1..k_max (whole table by default)"""
        k_max = self.T if k_max is None else min(k_max, self.T)
        rows = slice(1, k_max + 1) if k_max >= 1 else slice(0, 1)
        return np.max(self.f[rows], axis=0), np.max(self.g[rows], axis=0)

    def to_dict(self) -> Dict:
        return {
            "version": ARTIFACT_FORMAT_VERSION,
            "f": self.f.tolist(),
            "g": self.g.tolist(),
            "state_empty": self.state_empty.tolist(),
            "input_empty": self.input_empty.tolist(),
        }

    def save_to_folder(self, folder_path: str) -> None:
        if not os.path.exists(folder_path):
            os.makedirs(folder_path)
        save_json(self.to_dict(), os.path.join(folder_path, _TIGHTENING_FILE))


def tightening_load_from_folder(folder_path: str) -> TighteningTable:
    """Loads a table saved with TighteningTable.save_to_folder"""
    data = load_json(os.path.join(folder_path, _TIGHTENING_FILE))
    if data.get("version") != ARTIFACT_FORMAT_VERSION:
        raise RSMPCException(f"unsupported tightening format {data.get('version')}")
    return TighteningTable(
        np.array(data["f"]),
        np.array(data["g"]),
        np.array(data["state_empty"]),
        np.array(data["input_empty"]),
    )


def tighten(
    X: Polytope, U: Polytope, rprs: RPRSSequence, K: np.ndarray | None = None
) -> TighteningTable:
    """Tightening vectors f_k = support of E_k along the rows of F, and g_k
    = support of K E_k along the rows of G, for k = 0..T

    A step is flagged when its tightened set is empty or has a negative
    offset; nothing is raised.

    Args:
        X (Polytope): normalized state constraints {F x <= 1}
        U (Polytope): normalized input constraints {G u <= 1}
        rprs (RPRSSequence): the error sets
        K (np.ndarray) [None]: the feedback gain, checked against the gain
            the variance bounds were computed with
    """
    if K is not None and not np.allclose(
        np.asarray(K, dtype=float).reshape(rprs.bounds.K.shape), rprs.bounds.K
    ):
        raise RSMPCException("tightening gain differs from the gain of the variance bounds")
    F = X.H
    G = U.H
    T = rprs.bounds.T
    f = np.zeros((T + 1, F.shape[0]))
    g = np.zeros((T + 1, G.shape[0]))
    state_empty = np.zeros(T + 1, dtype=bool)
    input_empty = np.zeros(T + 1, dtype=bool)
    for k in range(1, T + 1):
        f[k] = rprs.state_sets.support_rows(rprs.bounds.bound(k), F)
        g[k] = rprs.input_sets.support_rows(rprs.bounds.input_bound(k), G)
        state_empty[k] = np.any(X.h - f[k] < 0) or Polytope(F, X.h - f[k]).is_empty()
        input_empty[k] = np.any(U.h - g[k] < 0) or Polytope(G, U.h - g[k]).is_empty()
    if np.any(state_empty) or np.any(input_empty):
        logger.warning(
            "tightened sets are empty at steps %s",
            str(np.flatnonzero(state_empty | input_empty).tolist()),
        )
    return TighteningTable(f, g, state_empty, input_empty)
