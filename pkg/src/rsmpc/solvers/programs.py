"""declarative descriptions of the optimization problems solved by rsmpc

Every other module states its problems through these containers and hands
them to a ConicSolver, so that the choice of backend stays in one place.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List

import cvxpy as cp
import numpy as np

from rsmpc.constants import (
    INFEASIBLE,
    NUMERICAL_FAILURE,
    OPTIMAL,
    PSD_EPS,
    VALID_BLOCK_KIND,
    VALID_MAXDET_OBJECTIVE,
)
from rsmpc.util.custom_exceptions import (
    InfeasibleProgram,
    NumericalFailure,
    RSMPCException,
)


@dataclass
class ConstraintBlock:
    """A tagged constraint block of a conic program

    kind (str): one of VALID_BLOCK_KIND
        - "equality":     expression == 0
        - "nonneg":       expression >= 0 (elementwise)
        - "second_order": ||cone_vector||_2 <= expression (expression scalar)
        - "psd":          expression >= epsilon * I in the Loewner order,
                          expression being an affine matrix-valued map
    """

    kind: str
    expression: cp.Expression
    name: str = ""
    cone_vector: cp.Expression | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        if self.kind not in VALID_BLOCK_KIND:
            raise RSMPCException(f"Invalid constraint block kind {self.kind}")
        if self.kind == "second_order" and self.cone_vector is None:
            raise RSMPCException("second order blocks need a cone vector")

    def to_constraint(self) -> cp.Constraint:
        """Translates the block into a cvxpy constraint"""
        if self.kind == "equality":
            return self.expression == 0
        if self.kind == "nonneg":
            return self.expression >= 0
        if self.kind == "second_order":
            return cp.SOC(self.expression, self.cone_vector)
        size = self.expression.shape[0]
        sym = (self.expression + self.expression.T) / 2
        return sym >> self.epsilon * np.eye(size)

    def violation(self) -> float:
        """Computes the violation of the block at the current variable values,
        independently of what the solver reports

        Returns:
            float: the largest violation (0 when satisfied)
        """
        value = self.expression.value
        if value is None:
            return float("inf")
        value = np.asarray(value, dtype=float)
        if self.kind == "equality":
            return float(np.max(np.abs(value), initial=0.0))
        if self.kind == "nonneg":
            return float(max(0.0, -np.min(value, initial=0.0)))
        if self.kind == "second_order":
            cone = np.asarray(self.cone_vector.value, dtype=float)
            return float(max(0.0, np.linalg.norm(cone) - float(value)))
        sym = (value + value.T) / 2 - self.epsilon * np.eye(value.shape[0])
        return float(max(0.0, -np.min(np.linalg.eigvalsh(sym))))

    def parameters(self) -> List[cp.Parameter]:
        """Returns the parameters the block depends on"""
        params = list(self.expression.parameters())
        if self.cone_vector is not None:
            params += list(self.cone_vector.parameters())
        return params


@dataclass
class ConicProgram:
    """A conic program: linear objective plus an optional convex term,
    subject to tagged constraint blocks.

    Parameters let a program be compiled once and re-solved with new data.
    """

    variables: Dict[str, cp.Variable]
    objective: cp.Expression | float = 0.0
    convex_term: cp.Expression | None = None
    blocks: List[ConstraintBlock] = field(default_factory=list)
    parameters: Dict[str, cp.Parameter] = field(default_factory=dict)
    name: str = "program"
    _problem: cp.Problem | None = field(default=None, init=False, repr=False)

    def objective_expression(self) -> cp.Expression:
        """Returns the full objective as a cvxpy expression"""
        expression = self.objective
        if self.convex_term is not None:
            expression = expression + self.convex_term
        return expression

    def check_well_formed(self) -> None:
        """Checks that the objective is affine plus convex and that every block
        is built on the program variables

        Raises:
            RSMPCException: if the program is not well formed
        """
        if isinstance(self.objective, cp.Expression) and not self.objective.is_affine():
            raise RSMPCException(f"{self.name}: the linear objective is not affine")
        if self.convex_term is not None and not self.convex_term.is_convex():
            raise RSMPCException(f"{self.name}: the convex term is not convex")
        for block in self.blocks:
            if block.kind == "psd":
                shape = block.expression.shape
                if len(shape) != 2 or shape[0] != shape[1]:
                    raise RSMPCException(
                        f"{self.name}: psd block {block.name} is not square {shape}"
                    )
            if not block.expression.is_affine():
                raise RSMPCException(
                    f"{self.name}: block {block.name} is not affine in the variables"
                )

    def problem(self) -> cp.Problem:
        """Returns the (cached) cvxpy problem"""
        if self._problem is None:
            self.check_well_formed()
            self._problem = cp.Problem(
                cp.Minimize(self.objective_expression()),
                [block.to_constraint() for block in self.blocks],
            )
        return self._problem

    def set_initial_point(self, hint: Dict[str, np.ndarray]) -> None:
        """Stores an initial-point hint on the variables"""
        for key, value in hint.items():
            if key in self.variables:
                self.variables[key].value = np.asarray(value, dtype=float).reshape(
                    self.variables[key].shape
                )


@dataclass
class ConicSolution:
    """result of a conic solve"""

    status: str
    objective: float | None
    values: Dict[str, np.ndarray]
    residual: float
    diagnostics: Dict = field(default_factory=dict)

    def is_optimal(self) -> bool:
        """True if the solve ended with a verified optimal point"""
        return self.status == OPTIMAL

    def raise_for_status(self) -> None:
        """Raises the exception matching a non optimal status"""
        if self.status == OPTIMAL:
            return
        if self.status == INFEASIBLE:
            raise InfeasibleProgram("program is infeasible", self.diagnostics)
        if self.status == NUMERICAL_FAILURE:
            raise NumericalFailure("numerical failure in conic solve", self.diagnostics)
        raise NumericalFailure(f"program ended with status {self.status}", self.diagnostics)


@dataclass
class MaxDetProgram:
    """max log det S subject to affine-in-S PSD blocks.

    S is symmetric of size dim and plays the role of the inverse of the
    bounding matrix X = S^-1. Each block is a function S -> affine matrix
    expression. objective "trace" minimizes trace(X) instead, which yields
    valid but not minimal bounds.
    """

    dim: int
    blocks: List[Callable[[cp.Expression], cp.Expression]]
    objective: str = "logdet"
    epsilon: float = PSD_EPS
    name: str = "maxdet"

    def __post_init__(self):
        if self.objective not in VALID_MAXDET_OBJECTIVE:
            raise RSMPCException(f"Invalid max-det objective {self.objective}")

    def to_conic(self) -> ConicProgram:
        """Encodes the max-det program as a ConicProgram over S.

        log det is handled by the backend through its exponential-cone
        reformulation of the triangular factor's diagonal."""
        S = cp.Variable((self.dim, self.dim), symmetric=True, name="S")
        blocks = [
            ConstraintBlock("psd", build(S), name=f"{self.name}_{i}", epsilon=self.epsilon)
            for i, build in enumerate(self.blocks)
        ]
        blocks.append(ConstraintBlock("psd", S, name=f"{self.name}_S", epsilon=0.0))
        if self.objective == "logdet":
            convex_term = -cp.log_det(S)
        else:
            convex_term = cp.matrix_frac(np.eye(self.dim), S)
        return ConicProgram(
            variables={"S": S},
            convex_term=convex_term,
            blocks=blocks,
            name=self.name,
        )


@dataclass
class MaxDetSolution:
    """result of a max-det solve"""

    S: np.ndarray
    objective: float
    status: str
    residual: float
