"""independent residual checker for conic solutions

The residuals are recomputed from the variable values by re-substitution
into every constraint block; nothing reported by the backend is trusted.
"""

from typing import Dict

import numpy as np

from rsmpc.constants import RESIDUAL_TOL
from rsmpc.solvers.programs import ConicProgram


def block_residuals(program: ConicProgram) -> Dict[str, float]:
    """Computes the violation of every block of the program

    Args:
        program (ConicProgram): a program whose variables hold values

    Returns:
        Dict[str, float]: block name (or index) -> violation
    """
    residuals = {}
    for i, block in enumerate(program.blocks):
        key = block.name if block.name else f"block_{i}"
        if key in residuals:
            key = f"{key}_{i}"
        residuals[key] = block.violation()
    return residuals


def max_residual(program: ConicProgram) -> float:
    """Returns the largest violation over all blocks"""
    return max(block_residuals(program).values(), default=0.0)


def worst_block(program: ConicProgram) -> str | None:
    """Returns the name of the most violated block, None for empty programs"""
    residuals = block_residuals(program)
    if len(residuals) == 0:
        return None
    return max(residuals, key=residuals.get)


def is_certified(program: ConicProgram, tol: float = RESIDUAL_TOL) -> bool:
    """True if every block is satisfied within tol"""
    return bool(np.isfinite(max_residual(program))) and max_residual(program) <= tol
