"""tests for module model"""

import numpy as np
import pytest

from rsmpc.model import (
    D_map,
    UncertainLTISystem,
    lqr_gain,
    project_parameter,
    synthesize_gain,
    system_from_dict,
    terminal_weight,
    terminal_weight_residual,
    verify_gain,
)
from rsmpc.polytope import Polytope
from rsmpc.util.custom_exceptions import (
    EmptyPolytope,
    InvalidProbability,
    NotQuadraticallyStable,
    RSMPCException,
)


def double_integrator(alpha: float = 0.2) -> UncertainLTISystem:
    """double integrator with an uncertain input gain, theta in [-alpha, 0]"""
    B = np.array([[0.5], [1.0]])
    return UncertainLTISystem(
        [np.array([[1.0, 1.0], [0.0, 1.0]]), np.zeros((2, 2))],
        [B, B],
        Polytope.from_box([-alpha], [0.0]),
        Polytope(np.array([[0.0, 1.0], [0.0, -1.0]]), np.array([3.0, 3.0])),
        Polytope.from_box([-10.0], [10.0]),
        0.8,
        0.8,
    )


def scalar_system(a: float, theta_box: float = 0.0) -> UncertainLTISystem:
    return UncertainLTISystem(
        [np.array([[a]]), np.array([[0.1]])],
        [np.array([[1.0]]), np.array([[0.0]])],
        Polytope.from_box([-theta_box], [theta_box]),
        Polytope.from_box([-1.0], [1.0]),
        Polytope.from_box([-1.0], [1.0]),
        0.9,
        0.9,
    )


def test_constraint_sets_are_normalized():
    """X is rescaled to unit offsets"""
    sys = double_integrator()
    assert np.allclose(sys.X.h, 1.0), "offsets of X should be 1"
    assert np.allclose(sys.X.H, [[0.0, 1.0 / 3.0], [0.0, -1.0 / 3.0]]), "normals should be scaled"
    assert (sys.n, sys.m, sys.p) == (2, 1, 1), "dimensions are wrong"


def test_parametric_matrices():
    """A(theta), B(theta) and the closed loop"""
    sys = double_integrator()
    assert np.allclose(sys.B([-0.2]), [[0.4], [0.8]]), "B(-0.2) should be 0.8 B_0"
    assert np.allclose(sys.A([-0.2]), [[1.0, 1.0], [0.0, 1.0]]), "A does not depend on theta"
    K = np.array([[-0.5, -1.0]])
    assert np.allclose(sys.A_cl(K, [0.0]), sys.A_list[0] + sys.B_list[0] @ K), "closed loop is wrong"


def test_D_map():
    """columns A_i a + B_i b"""
    sys = double_integrator()
    D = D_map([5.0, -7.0], [2.0], sys)
    assert D.shape == (2, 1), "D should be n x p"
    assert np.allclose(D[:, 0], [1.0, 2.0]), "D(a, 2) should be [1, 2] for any a"


def test_invalid_systems():
    """constructor invariants"""
    with pytest.raises(InvalidProbability):
        UncertainLTISystem(
            [np.eye(1), np.eye(1)],
            [np.eye(1), np.eye(1)],
            Polytope.from_box([-1.0], [1.0]),
            Polytope.from_box([-1.0], [1.0]),
            Polytope.from_box([-1.0], [1.0]),
            1.0,
            0.5,
        )
    with pytest.raises(EmptyPolytope):
        UncertainLTISystem(
            [np.eye(1), np.eye(1)],
            [np.eye(1), np.eye(1)],
            Polytope(np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])),
            Polytope.from_box([-1.0], [1.0]),
            Polytope.from_box([-1.0], [1.0]),
            0.5,
            0.5,
        )
    with pytest.raises(RSMPCException):
        UncertainLTISystem(
            [np.eye(2), np.eye(1)],
            [np.ones((2, 1)), np.ones((2, 1))],
            Polytope.from_box([-1.0], [1.0]),
            Polytope.from_box([-1.0, -1.0], [1.0, 1.0]),
            Polytope.from_box([-1.0], [1.0]),
            0.5,
            0.5,
        )


def test_dict_round_trip():
    """system_from_dict inverts to_dict"""
    sys = double_integrator()
    loaded = system_from_dict(sys.to_dict())
    assert loaded.Theta == sys.Theta, "Theta should survive the round trip"
    assert loaded.X == sys.X, "X should survive the round trip"
    assert np.array_equal(loaded.B_w, sys.B_w), "B_w should survive the round trip"


def test_verify_gain_scalar():
    """a stable scalar system is certified with K = 0"""
    sys = scalar_system(0.9)
    gain = verify_gain(sys, np.zeros((1, 1)))
    assert gain.P_lyap[0, 0] >= 1.0 - 1e-6, "certificate should satisfy P >= I"
    with pytest.raises(NotQuadraticallyStable):
        verify_gain(scalar_system(1.2), np.zeros((1, 1)))


def test_lqr_gain_is_certified():
    """the LQR gain at the upper end of Theta stabilizes the whole set"""
    sys = double_integrator(0.2)
    K = lqr_gain(sys, np.eye(2), np.eye(1), theta=[-0.2])
    gain = verify_gain(sys, K)
    for theta in sys.theta_vertices():
        radius = max(abs(np.linalg.eigvals(sys.A_cl(gain.K, theta))))
        assert radius < 1.0, "closed loop should be Schur at every vertex"


def test_synthesize_gain():
    """LMI synthesis on an unstable scalar system"""
    sys = scalar_system(1.5, 0.5)
    gain = synthesize_gain(sys)
    for theta in sys.theta_vertices():
        assert abs(sys.A_cl(gain.K, theta)[0, 0]) < 1.0, "synthesized gain should stabilize"


def test_terminal_weight_scalar():
    """a_cl = 0.5 and Q + K^T R K = 1 give P = 1 / (1 - 0.25)"""
    sys = scalar_system(0.5)
    P = terminal_weight(sys, np.zeros((1, 1)), np.eye(1), np.eye(1))
    assert P[0, 0] == pytest.approx(4.0 / 3.0, abs=1e-5), "minimum trace P should be 4/3"
    assert P[0, 0] >= 4.0 / 3.0 - 1e-7, "P should not undercut the Lyapunov bound"
    residual = terminal_weight_residual(sys, np.zeros((1, 1)), np.eye(1), np.eye(1), P)
    assert residual <= 1e-6, "decrease condition should hold"
    too_small = terminal_weight_residual(sys, np.zeros((1, 1)), np.eye(1), np.eye(1), np.eye(1))
    assert too_small > 0, "P = 1 violates the decrease condition"


def test_project_parameter():
    """projection onto Theta"""
    sys = double_integrator(0.2)
    assert np.allclose(project_parameter(sys, [-0.1]), [-0.1]), "points inside are unchanged"
    assert project_parameter(sys, [0.5])[0] == pytest.approx(0.0, abs=1e-6), "should clip to 0"
    assert project_parameter(sys, [-1.0])[0] == pytest.approx(-0.2, abs=1e-6), "should clip to -0.2"


def test_singleton_theta():
    """the nominal model keeps everything but Theta"""
    sys = double_integrator(0.2).with_singleton_theta([-0.2])
    assert len(sys.theta_vertices()) == 1, "singleton should have one vertex"
    assert np.allclose(sys.theta_vertices()[0], [-0.2]), "vertex should be theta_bar"
