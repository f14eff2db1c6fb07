"""tests for the homothetic tube and the terminal set"""

import numpy as np
import pytest

from rsmpc.model import UncertainLTISystem, lqr_gain
from rsmpc.polytope import Polytope
from rsmpc.tube.homothetic import (
    HomotheticTube,
    containment_check,
    containment_residual,
    dual_containment_feasible,
    dual_containment_margin,
)
from rsmpc.tube.terminal import (
    TerminalSet,
    alpha_pieces,
    stage_set,
    successor,
    terminal_invariance_check,
    terminal_set,
    terminal_set_load_from_folder,
)
from rsmpc.util.custom_exceptions import RSMPCException, TerminalSetEmpty

BASE_1D = Polytope.from_box([-1.0], [1.0])
BASE_2D = Polytope.from_box([-1.0, -1.0], [1.0, 1.0])


def scalar_system() -> UncertainLTISystem:
    """x+ = (0.5 + 0.1 theta) x + u, theta in [-1, 1], |x|, |u| <= 1"""
    return UncertainLTISystem(
        [np.array([[0.5]]), np.array([[0.1]])],
        [np.array([[1.0]]), np.array([[0.0]])],
        Polytope.from_box([-1.0], [1.0]),
        Polytope.from_box([-1.0], [1.0]),
        Polytope.from_box([-1.0], [1.0]),
        0.9,
        0.9,
    )


def double_integrator() -> UncertainLTISystem:
    B = np.array([[0.5], [1.0]])
    return UncertainLTISystem(
        [np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros((2, 2))],
        [B, B],
        Polytope.from_box([-0.2], [0.0]),
        Polytope(np.array([[0.0, 1.0], [0.0, -1.0]]), np.array([3.0, 3.0])),
        Polytope.from_box([-10.0], [10.0]),
        0.8,
        0.8,
    )


def test_tube_sets():
    """membership in the homothetic sets"""
    tube = HomotheticTube(BASE_2D, [[0.0, 0.0], [1.0, 1.0]], [1.0, 0.5])
    assert len(tube) == 2, "tube should have 2 sets"
    assert tube.contains(1, [1.5, 0.5]), "corner of the second set should be inside"
    assert not tube.contains(1, [1.6, 1.0]), "point outside the second set"
    assert tube.set_at(0) == BASE_2D, "unit scaling at the origin is the base"
    with pytest.raises(RSMPCException):
        HomotheticTube(BASE_2D, [[0.0, 0.0]], [-1.0])


def test_containment_at_origin():
    """the origin maps into itself"""
    sys = scalar_system()
    K = np.zeros((1, 1))
    assert containment_check((0.0, 0.0), [0.0], (0.0, 0.0), sys, K, BASE_1D), "origin should be contained"


def test_containment_image():
    """the image of [-1, 1] is [-0.6, 0.6] at the worst theta"""
    sys = scalar_system()
    K = np.zeros((1, 1))
    residual = containment_residual([0.0], 1.0, [0.0], [0.0], 0.6, sys, K, BASE_1D)
    assert residual == pytest.approx(0.0, abs=1e-9), "0.6 should be the tight scaling"
    assert containment_check((0.0, 1.0), [0.0], (0.0, 0.61), sys, K, BASE_1D), "inflated set contains the image"
    assert not containment_check((0.0, 1.0), [0.0], (0.0, 0.59), sys, K, BASE_1D), "deflated set misses the image"
    assert containment_check((0.0, 1.0), [0.2], (0.2, 0.6), sys, K, BASE_1D), "input shifts the image"


def test_base_must_be_unit():
    """bases with other offsets are rejected"""
    sys = scalar_system()
    with pytest.raises(RSMPCException):
        containment_residual([0.0], 1.0, [0.0], [0.0], 1.0, sys, np.zeros((1, 1)), Polytope.from_box([-2.0], [2.0]))


def test_dual_matches_primal_scalar():
    """dual margin equals the primal residual"""
    sys = scalar_system()
    K = np.zeros((1, 1))
    data = dual_containment_margin((0.0, 1.0), [0.0], (0.0, 0.5), sys, K, BASE_1D)
    assert data.margin == pytest.approx(0.1, abs=1e-6), "margin should be 0.6 - 0.5"
    assert data.stationarity_residual(BASE_1D.H, sys.Theta.H) <= 1e-7, "multipliers should be stationary"
    assert all(np.all(L >= -1e-9) for L in data.Lambda), "multipliers should be nonnegative"


@pytest.mark.parametrize("seed", range(5))
def test_dual_matches_primal_double_integrator(seed):
    """primal and dual containment agree on random tuples"""
    sys = double_integrator()
    K = lqr_gain(sys, np.eye(2), np.eye(1), theta=[-0.2])
    rng = np.random.default_rng(seed)
    s = rng.uniform(-1.0, 1.0, 2)
    alpha = rng.uniform(0.0, 0.5)
    v = rng.uniform(-0.5, 0.5, 1)
    s_next = rng.uniform(-1.0, 1.0, 2)
    alpha_next = rng.uniform(0.0, 2.0)
    primal = containment_residual(s, alpha, v, s_next, alpha_next, sys, K, BASE_2D)
    dual = dual_containment_margin((s, alpha), v, (s_next, alpha_next), sys, K, BASE_2D)
    assert dual.margin == pytest.approx(primal, abs=1e-6), "dual margin should equal the primal residual"
    agree = dual_containment_feasible((s, alpha), v, (s_next, alpha_next), sys, K, BASE_2D) == (primal <= 1e-7)
    assert agree or abs(primal) <= 1e-6, "feasibility verdicts should agree away from the boundary"


def test_stage_set_scalar():
    """stage set of the scalar system is |s| + alpha <= 1, alpha >= 0"""
    stage = stage_set(scalar_system(), np.zeros((1, 1)), BASE_1D, np.zeros(2), np.zeros(2))
    assert stage.contains([0.5, 0.5]), "(0.5, 0.5) should be stage feasible"
    assert not stage.contains([0.5, 0.6]), "(0.5, 0.6) leaves the state set"
    assert not stage.contains([0.0, -0.1]), "negative scalings are excluded"


def test_alpha_pieces_scalar():
    """minimal scaling is 0.1 |s| + 0.6 alpha"""
    C, e = alpha_pieces(scalar_system(), np.zeros((1, 1)), BASE_1D, np.zeros(1))
    for s, alpha in ((0.5, 0.2), (-1.0, 0.0), (0.0, 1.0)):
        assert float(np.max(C @ [s] + e * alpha)) == pytest.approx(0.1 * abs(s) + 0.6 * alpha), "pieces are wrong"


def test_terminal_set_scalar():
    """terminal set of the scalar system is invariant"""
    sys = scalar_system()
    K = np.zeros((1, 1))
    computation_logger = {}
    ts = terminal_set(sys, K, BASE_1D, np.zeros(2), np.zeros(2), computation_logger=computation_logger)
    assert ts.converged, "iteration should converge"
    assert ts.contains([0.0], 0.0), "terminal set should contain the origin"
    assert ts.contains([0.5], 0.5), "the stage set is invariant here"
    assert "terminal set time" in computation_logger, "timing should be logged"
    report = terminal_invariance_check(ts, sys, K, BASE_1D)
    assert report.passed, "invariance check should pass"
    assert report.vertices >= 3, "check should visit every vertex"

    nxt = successor(ts, sys, K, BASE_1D, [0.5], 0.2)
    assert nxt.admissible, "successor should be admissible"
    assert nxt.s[0] == pytest.approx(0.25), "s+ should be 0.5 s"
    assert nxt.alpha == pytest.approx(0.17), "alpha+ should be 0.1 |s| + 0.6 alpha"


def test_inflated_terminal_set_fails():
    """a set reaching outside the stage constraints fails the check"""
    sys = scalar_system()
    K = np.zeros((1, 1))
    ts = terminal_set(sys, K, BASE_1D, np.zeros(2), np.zeros(2))
    inflated = TerminalSet(
        Polytope(ts.H, 1.5 * ts.h), ts.stage, ts.theta_center, ts.iterations, ts.converged
    )
    report = terminal_invariance_check(inflated, sys, K, BASE_1D)
    assert not report.passed, "inflated set should fail"
    assert report.stage_residual > 0.1, "inflated set should violate the stage constraints"


def test_terminal_set_empty():
    """over-tightened stage set"""
    with pytest.raises(TerminalSetEmpty):
        terminal_set(scalar_system(), np.zeros((1, 1)), BASE_1D, 1.5 * np.ones(2), np.zeros(2))


def test_terminal_set_serialization(tmp_path):
    """save and load"""
    ts = terminal_set(scalar_system(), np.zeros((1, 1)), BASE_1D, 0.1 * np.ones(2), np.zeros(2))
    folder = str(tmp_path / "terminal")
    ts.save_to_folder(folder)
    loaded = terminal_set_load_from_folder(folder)
    assert loaded.polytope == ts.polytope, "polytope should survive"
    assert loaded.converged == ts.converged, "convergence flag should survive"
    assert loaded.n == 1, "state dimension should be 1"
