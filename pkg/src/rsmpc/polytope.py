"""convex polytopes in H-representation

A Polytope is the set {x | H x <= h}. Vertices are computed on demand by
double description (pycddlib) and cached; LPs go through scipy's HiGHS.
Polytopes are immutable after construction.
"""

import logging
from typing import Dict, List, Tuple

import cdd
import numpy as np
from scipy.optimize import linprog

from rsmpc.constants import FACET_TOL, MAX_VERTEX_DIM
from rsmpc.util.custom_exceptions import (
    DimensionTooLarge,
    EmptyPolytope,
    RSMPCException,
    UnboundedDirection,
)

_LP_OPTIMAL = 0
_LP_INFEASIBLE = 2
_LP_UNBOUNDED = 3

logger = logging.getLogger("rsmpc_polytope")


class Polytope:
    """Convex polytope {x | H x <= h}

    The normals are stored exactly as given (no normalization), so unit
    offsets of constraint sets are preserved bit-for-bit.
    """

    H: np.ndarray
    h: np.ndarray

    def __init__(
        self,
        H: np.ndarray,
        h: np.ndarray,
        vertices: np.ndarray | None = None,
    ) -> None:
        """Builds a polytope from its H-representation

        Args:
            H (np.ndarray): facet normals, one per row
            h (np.ndarray): facet offsets
            vertices (np.ndarray) [None]: known extreme points, one per row.
                They are cross-validated against (H, h) before being cached

        Raises:
            RSMPCException: on inconsistent dimensions or invalid vertices
        """
        H = np.array(H, dtype=float, ndmin=2)
        h = np.array(h, dtype=float).reshape(-1)
        if H.shape[0] != h.shape[0]:
            raise RSMPCException(
                f"H has {H.shape[0]} rows but h has {h.shape[0]} entries"
            )
        self.H = H
        self.H.setflags(write=False)
        self.h = h
        self.h.setflags(write=False)
        self._vertices = None
        self._empty = None
        self._chebyshev = None
        if vertices is not None:
            vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
            self._check_vertices(vertices)
            self._vertices = vertices
            self._empty = len(vertices) == 0

    # CONSTRUCTORS

    @classmethod
    def from_box(cls, lower, upper) -> "Polytope":
        """Box {lower <= x <= upper}"""
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        n = len(lower)
        return cls(np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([upper, -lower]))

    @classmethod
    def from_point(cls, point) -> "Polytope":
        """The singleton {point}"""
        point = np.asarray(point, dtype=float).reshape(-1)
        return cls.from_box(point, point)

    @classmethod
    def from_vertices(cls, points: np.ndarray) -> "Polytope":
        """Convex hull of a set of points, by double description

        Args:
            points (np.ndarray): one point per row

        Returns:
            Polytope: the hull, in H-representation with equalities split
                into pairs of inequalities
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        mat = cdd.Matrix(
            np.hstack([np.ones((points.shape[0], 1)), points]), number_type="float"
        )
        mat.rep_type = cdd.RepType.GENERATOR
        poly = cdd.Polyhedron(mat)
        inequalities = poly.get_inequalities()
        rows = np.array([list(row) for row in inequalities], dtype=float).reshape(
            -1, points.shape[1] + 1
        )
        H_rows = []
        h_rows = []
        for i, row in enumerate(rows):
            # cdd rows read b + A x >= 0
            H_rows.append(-row[1:])
            h_rows.append(row[0])
            if i in inequalities.lin_set:
                H_rows.append(row[1:])
                h_rows.append(-row[0])
        return cls(np.array(H_rows), np.array(h_rows))

    # BASIC PROPERTIES

    @property
    def dim(self) -> int:
        """ambient dimension"""
        return self.H.shape[1]

    def __len__(self) -> int:
        return self.H.shape[0]

    def __str__(self) -> str:
        return f"Polytope(dim={self.dim}, rows={len(self)})"

    def __contains__(self, point) -> bool:
        return self.contains(point)

    def contains(self, point, tol: float = FACET_TOL) -> bool:
        """Checks H x <= h + tol elementwise"""
        point = np.asarray(point, dtype=float).reshape(-1)
        return bool(np.all(self.H @ point <= self.h + tol))

    def _lp(self, direction: np.ndarray):
        """maximizes direction^T x over the polytope"""
        return linprog(
            -direction,
            A_ub=self.H,
            b_ub=self.h,
            bounds=[(None, None)] * self.dim,
            method="highs",
        )

    def is_empty(self) -> bool:
        """True if no point satisfies H x <= h"""
        if self._empty is None:
            if len(self) == 0:
                self._empty = False
            else:
                result = self._lp(np.zeros(self.dim))
                self._empty = result.status == _LP_INFEASIBLE
        return self._empty

    def is_bounded(self) -> bool:
        """True if the LPs along every +-axis direction are bounded"""
        if self.is_empty():
            return True
        for i in range(self.dim):
            for sign in (1.0, -1.0):
                direction = np.zeros(self.dim)
                direction[i] = sign
                if self._lp(direction).status == _LP_UNBOUNDED:
                    return False
        return True

    # SUPPORT AND VERTICES

    def support(self, direction) -> float:
        """max_{x in P} direction^T x

        Raises:
            EmptyPolytope: if P is empty
            UnboundedDirection: if P is unbounded along direction
        """
        direction = np.asarray(direction, dtype=float).reshape(-1)
        if self.is_empty():
            raise EmptyPolytope("support of an empty polytope")
        if not np.any(direction):
            return 0.0
        result = self._lp(direction)
        if result.status == _LP_UNBOUNDED:
            raise UnboundedDirection(f"polytope unbounded along {direction}")
        if result.status != _LP_OPTIMAL:
            raise EmptyPolytope(f"support LP ended with status {result.status}")
        return float(-result.fun)

    def support_rows(self, D: np.ndarray) -> np.ndarray:
        """support along every row of D"""
        D = np.atleast_2d(np.asarray(D, dtype=float))
        return np.array([self.support(row) for row in D])

    def vertices(self) -> np.ndarray:
        """Exact extreme points, one per row, deduplicated within FACET_TOL

        Raises:
            DimensionTooLarge: if dim > MAX_VERTEX_DIM
            EmptyPolytope: if P is empty
            UnboundedDirection: if P has rays
        """
        if self._vertices is not None:
            return self._vertices
        if self.dim > MAX_VERTEX_DIM:
            raise DimensionTooLarge(
                f"vertex enumeration limited to dimension {MAX_VERTEX_DIM}, got {self.dim}"
            )
        if self.is_empty():
            raise EmptyPolytope("vertices of an empty polytope")
        mat = cdd.Matrix(np.hstack([self.h.reshape(-1, 1), -self.H]), number_type="float")
        mat.rep_type = cdd.RepType.INEQUALITY
        generators = cdd.Polyhedron(mat).get_generators()
        points = []
        for generator in generators:
            if generator[0] == 1:
                points.append(np.array(generator[1:], dtype=float))
            else:
                raise UnboundedDirection("polytope has a ray, vertices are not defined")
        if len(generators.lin_set) > 0:
            raise UnboundedDirection("polytope contains a line")
        self._vertices = _deduplicate(points, self.dim)
        self._vertices.setflags(write=False)
        return self._vertices

    def _check_vertices(self, vertices: np.ndarray) -> None:
        if vertices.shape[1] != self.dim:
            raise RSMPCException("vertices do not match the polytope dimension")
        if np.any(vertices @ self.H.T > self.h + FACET_TOL):
            raise RSMPCException("cached vertices violate the H-representation")
        for row, offset in zip(self.H, self.h):
            by_vertices = float(np.max(vertices @ row))
            by_lp = self.support(row)
            if abs(by_vertices - by_lp) > FACET_TOL * max(1.0, abs(offset)):
                raise RSMPCException(
                    "cached vertices do not reproduce the facet with normal "
                    f"{row}: {by_vertices} vs {by_lp}"
                )

    # SET OPERATIONS

    def pontryagin_diff(self, other: "Polytope") -> "Polytope":
        """{x | x + s in self for all s in other}

        The result may be empty: check result.is_empty()
        """
        if other.is_empty():
            raise EmptyPolytope("pontryagin difference by an empty polytope")
        return Polytope(self.H, self.h - other.support_rows(self.H))

    def homothet(self, center, scale: float) -> "Polytope":
        """{center} (+) scale * self, for scale >= 0"""
        center = np.asarray(center, dtype=float).reshape(-1)
        return Polytope(self.H, scale * self.h + self.H @ center)

    def intersect(self, other: "Polytope") -> "Polytope":
        """intersection, without redundancy removal"""
        return Polytope(np.vstack([self.H, other.H]), np.concatenate([self.h, other.h]))

    def chebyshev_center(self) -> Tuple[np.ndarray, float]:
        """Center and radius of the largest inscribed ball

        Raises:
            EmptyPolytope: if P is empty
        """
        if self._chebyshev is None:
            norms = np.linalg.norm(self.H, axis=1)
            c = np.zeros(self.dim + 1)
            c[-1] = -1.0
            result = linprog(
                c,
                A_ub=np.hstack([self.H, norms.reshape(-1, 1)]),
                b_ub=self.h,
                bounds=[(None, None)] * self.dim + [(0, None)],
                method="highs",
            )
            if result.status != _LP_OPTIMAL:
                raise EmptyPolytope("chebyshev center of an empty or unbounded polytope")
            self._chebyshev = (np.array(result.x[:-1]), float(result.x[-1]))
        return self._chebyshev

    def minimal(self, tol: float = FACET_TOL) -> "Polytope":
        """Removes duplicated and redundant rows, one LP per row"""
        if len(self) == 0:
            return self
        scale = np.linalg.norm(np.hstack([self.H, self.h.reshape(-1, 1)]), axis=1)
        scale[scale == 0] = 1.0
        normalized = np.hstack([self.H, self.h.reshape(-1, 1)]) / scale.reshape(-1, 1)
        keep = []
        for i in range(len(self)):
            if not np.any(self.H[i]):
                if self.h[i] < -tol:
                    return Polytope(self.H, self.h)
                continue
            if any(np.allclose(normalized[i], normalized[j], atol=tol) for j in keep):
                continue
            keep.append(i)
        H = self.H[keep]
        h = self.h[keep]
        essential = []
        for i in range(len(H)):
            relaxed_h = h.copy()
            relaxed_h[i] += 1.0
            result = linprog(
                -H[i],
                A_ub=H,
                b_ub=relaxed_h,
                bounds=[(None, None)] * self.dim,
                method="highs",
            )
            if result.status == _LP_INFEASIBLE:
                return Polytope(H, h)
            if result.status != _LP_OPTIMAL or -result.fun > h[i] + tol:
                essential.append(i)
        return Polytope(H[essential], h[essential])

    def normalized(self) -> Tuple["Polytope", bool]:
        """Rescales rows to unit offsets

        Rows with zero offset are kept as they are.

        Returns:
            Tuple[Polytope, bool]: the normalized polytope and whether any row changed

        Raises:
            RSMPCException: if some offset is negative (origin outside the set)
        """
        if np.any(self.h < 0):
            raise RSMPCException("cannot normalize a polytope that excludes the origin")
        scale = np.where(self.h > 0, self.h, 1.0)
        changed = bool(np.any(scale != 1.0))
        return Polytope(self.H / scale.reshape(-1, 1), self.h / scale), changed

    # SERIALIZATION

    def to_dict(self) -> Dict:
        """JSON-compatible {"H": rows, "h": offsets}"""
        return {"H": self.H.tolist(), "h": self.h.tolist()}

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polytope):
            return False
        return (
            self.H.shape == other.H.shape
            and np.array_equal(self.H, other.H)
            and np.array_equal(self.h, other.h)
        )

    def __hash__(self):
        return hash((self.H.tobytes(), self.h.tobytes()))


def polytope_from_dict(data: Dict) -> Polytope:
    """Builds a polytope from {"H": rows, "h": offsets}"""
    if "H" not in data or "h" not in data:
        raise RSMPCException("polytope description needs both 'H' and 'h'")
    H = np.asarray(data["H"], dtype=float)
    h = np.asarray(data["h"], dtype=float)
    if H.ndim == 1:
        H = H.reshape(-1, 1)
    return Polytope(H, h)


def _deduplicate(points: List[np.ndarray], dim: int) -> np.ndarray:
    unique = []
    for point in points:
        if not any(
            np.linalg.norm(point - other) <= FACET_TOL * max(1.0, np.linalg.norm(other))
            for other in unique
        ):
            unique.append(point)
    return np.array(unique, dtype=float).reshape(-1, dim)
