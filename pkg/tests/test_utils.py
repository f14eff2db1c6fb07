"""tests for module util"""

import logging
import random
import string

import cvxpy as cp
import numpy as np

import rsmpc.util._utils as utils
from rsmpc.solvers.cvxpy_solver import CvxpyConicSolver
from rsmpc.solvers.programs import ConicProgram, ConstraintBlock
from rsmpc.util._program_dump import dump_program, program_to_text
from rsmpc.util.custom_exceptions import InvalidSolverException


def test_is_valid_solver():
    """test for utils.is_valid_solver()"""
    assert utils.is_valid_solver("clarabel"), "clarabel should be a valid solver"
    assert utils.is_valid_solver("scs"), "scs should be a valid solver"
    assert utils.is_valid_solver("auto"), "auto should be a valid solver"
    rand_str = "".join(
        random.choice(string.ascii_lowercase + string.digits) for _ in range(10)
    )
    assert not utils.is_valid_solver(rand_str), "random strings are not valid solvers"
    assert not utils.is_valid_solver(""), "Empty string is not a valid solver"


def test_is_valid_names():
    """tests for the other name validators"""
    assert utils.is_valid_rprs_shape("ellipsoid"), "ellipsoid should be a valid shape"
    assert not utils.is_valid_rprs_shape("sphere"), "sphere is not a valid shape"
    assert utils.is_valid_noise_family("moment_only"), "moment_only should be a valid family"
    assert not utils.is_valid_noise_family("laplace"), "laplace is not a valid family"
    assert utils.is_valid_estimator("rls"), "rls should be a valid estimator"
    assert not utils.is_valid_estimator("kalman"), "kalman is not a valid estimator"


def test_get_solver():
    """test for utils.get_solver()"""
    solver = utils.get_solver("auto")
    assert isinstance(solver, CvxpyConicSolver), "auto should give a cvxpy solver"
    assert solver.backends == ["CLARABEL", "SCS"], "auto should fall back to SCS"
    assert utils.get_solver("scs").backends == ["SCS"], "scs should only use SCS"
    try:
        utils.get_solver("mosek")
        raised = False
    except InvalidSolverException:
        raised = True
    assert raised, "unknown solver names should raise InvalidSolverException"


def test_env_settings(monkeypatch):
    """environment overrides"""
    monkeypatch.setenv("RSMPC_CACHE_DIR", "/tmp/rsmpc_cache_test")
    assert utils.get_cache_dir() == "/tmp/rsmpc_cache_test", "cache dir should follow the environment"
    monkeypatch.setenv("RSMPC_LOG_LEVEL", "debug")
    assert utils.get_log_level() == logging.DEBUG, "log level should follow the environment"
    monkeypatch.setenv("RSMPC_LOG_LEVEL", "chatty")
    assert utils.get_log_level() == logging.WARNING, "unknown levels should fall back to WARNING"


def test_to_jsonable():
    """numpy data becomes plain python data"""
    data = {"a": np.eye(2), "b": (np.float64(1.5), np.int64(2)), 3: [np.zeros(1)]}
    converted = utils.to_jsonable(data)
    assert converted == {"a": [[1.0, 0.0], [0.0, 1.0]], "b": [1.5, 2], "3": [[0.0]]}, "conversion is wrong"


def test_content_hash():
    """hash is stable and sensitive to values"""
    first = utils.content_hash({"x": np.array([1.0, 2.0]), "y": "a"})
    second = utils.content_hash({"y": "a", "x": [1.0, 2.0]})
    assert first == second, "key order and numpy types should not change the hash"
    assert first != utils.content_hash({"x": [1.0, 2.0000001], "y": "a"}), "values should change the hash"
    assert len(first) == 64, "hash should be a sha256 hex digest"


def test_json_round_trip(tmp_path):
    """save_json and load_json"""
    file_name = str(tmp_path / "data.json")
    utils.save_json({"P": np.eye(2)}, file_name)
    assert utils.load_json(file_name) == {"P": [[1.0, 0.0], [0.0, 1.0]]}, "matrix should be stored row-major"


def test_program_dump(tmp_path):
    """text rendering of a program"""
    x = cp.Variable(2, name="x")
    program = ConicProgram(
        {"x": x},
        objective=cp.sum(x),
        blocks=[
            ConstraintBlock("nonneg", x, name="positive"),
            ConstraintBlock("psd", cp.diag(x), name="diag"),
        ],
        name="example",
    )
    text = program_to_text(program)
    assert text.startswith("program example"), "dump should start with the program name"
    assert "block positive kind=nonneg" in text, "nonneg block should be listed"
    assert "block diag kind=psd" in text, "psd block should be listed"
    file_name = str(tmp_path / "program.txt")
    dump_program(program, file_name)
    with open(file_name, "r", encoding="utf8") as in_file:
        assert in_file.read() == text, "file should hold the same rendering"
