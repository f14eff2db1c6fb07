"""utility functions module"""

import hashlib
import json
import logging
import os
from typing import Any, Dict

import numpy as np
from dotenv import load_dotenv

from rsmpc.constants import (
    DEFAULT_CACHE_DIR,
    ENV_CACHE_DIR,
    ENV_LOG_LEVEL,
    ENV_SOLVER,
    RESIDUAL_TOL,
    VALID_ESTIMATOR,
    VALID_NOISE_FAMILY,
    VALID_RPRS_SHAPE,
    VALID_SOLVER,
)
from rsmpc.solvers.cvxpy_solver import CvxpyConicSolver
from rsmpc.solvers.solver import ConicSolver
from rsmpc.util.custom_exceptions import InvalidSolverException

_ENV_LOADED = False


def is_valid_solver(solver: str) -> bool:
    """Checks if the provided solver name is valid

    Args:
        solver (str): the name of the solver

    Returns:
        bool: True if the solver is valid, False otherwise
    """
    return solver in VALID_SOLVER


def is_valid_rprs_shape(shape: str) -> bool:
    """Checks if the provided RPRS shape is valid"""
    return shape in VALID_RPRS_SHAPE


def is_valid_noise_family(family: str) -> bool:
    """Checks if the provided noise family is valid"""
    return family in VALID_NOISE_FAMILY


def is_valid_estimator(estimator: str) -> bool:
    """Checks if the provided estimator name is valid"""
    return estimator in VALID_ESTIMATOR


def get_solver(solver: str | None = None, residual_tol: float = RESIDUAL_TOL) -> ConicSolver:
    """Returns a conic solver instance

    Args:
        solver (str) [None]: one of VALID_SOLVER. If None, the value of the
            RSMPC_SOLVER environment variable is used, defaulting to "auto"
        residual_tol (float) [RESIDUAL_TOL]: maximum accepted constraint violation

    Returns:
        ConicSolver: the solver

    Raises:
        InvalidSolverException: if the solver name is not valid
    """
    if solver is None:
        solver = get_env_setting(ENV_SOLVER, "auto")
    if not is_valid_solver(solver):
        raise InvalidSolverException(
            f"Invalid solver {solver}, valid solvers are {VALID_SOLVER}"
        )
    if solver == "clarabel":
        return CvxpyConicSolver(["CLARABEL"], residual_tol=residual_tol)
    if solver == "scs":
        return CvxpyConicSolver(["SCS"], residual_tol=residual_tol)
    return CvxpyConicSolver(["CLARABEL", "SCS"], residual_tol=residual_tol)


def get_env_setting(name: str, default: str) -> str:
    """Reads an environment override, loading a .env file on first use"""
    global _ENV_LOADED
    if not _ENV_LOADED:
        load_dotenv()
        _ENV_LOADED = True
    return os.environ.get(name, default)


def get_cache_dir() -> str:
    """Returns the artifact cache directory"""
    return get_env_setting(ENV_CACHE_DIR, DEFAULT_CACHE_DIR)


def get_log_level(default: str = "WARNING") -> int:
    """Returns the logging level requested through RSMPC_LOG_LEVEL"""
    name = get_env_setting(ENV_LOG_LEVEL, default).upper()
    level = logging.getLevelName(name)
    if not isinstance(level, int):
        return logging.WARNING
    return level


def to_jsonable(obj: Any) -> Any:
    """Recursively turns numpy data into plain python data (row-major lists)"""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    return obj


def content_hash(obj: Any) -> str:
    """SHA-256 of the canonical JSON of obj

    Floats are written with repr precision, so equal inputs hash equally
    across runs and platforms.
    """
    canonical = json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def save_json(data: Dict, file_name: str) -> None:
    """Writes data as indented JSON"""
    with open(file_name, "w", encoding="utf8") as out_file:
        json.dump(to_jsonable(data), out_file, indent=4)


def load_json(file_name: str) -> Dict:
    """Reads a JSON file"""
    with open(file_name, "r", encoding="utf8") as in_file:
        return json.load(in_file)
