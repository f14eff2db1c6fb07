"""tests for the receding horizon controller"""

import numpy as np
import pytest

from rsmpc.model import UncertainLTISystem
from rsmpc.mpc.config import MPCConfig, StageCost
from rsmpc.mpc.controller import MPCStepSolution, RobustStochasticMPC
from rsmpc.polytope import Polytope
from rsmpc.rprs.sets import TighteningTable
from rsmpc.tube.terminal import terminal_set
from rsmpc.util.custom_exceptions import (
    EstimateOutsideTheta,
    MissingPrevSolution,
    ProblemInfeasible,
    RSMPCException,
)

N = 3
BASE = Polytope.from_box([-1.0], [1.0])


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


def controller(project_estimate: bool = True, w_bar=None) -> RobustStochasticMPC:
    sys = scalar_system()
    K = np.zeros((1, 1))
    tightening = TighteningTable(np.zeros((N + 1, 2)), np.zeros((N + 1, 2)))
    cfg = MPCConfig(
        N=N,
        cost=StageCost(np.eye(1), np.eye(1), 4.0 / 3.0 * np.eye(1)),
        K=K,
        base=BASE,
        tightening=tightening,
        terminal=terminal_set(sys, K, BASE, np.zeros(2), np.zeros(2)),
        w_bar=w_bar,
        project_estimate=project_estimate,
    )
    return RobustStochasticMPC(sys, cfg)


def test_stage_cost():
    """numeric stage and terminal costs"""
    cost = StageCost(np.eye(2), 2 * np.eye(1), 3 * np.eye(2), x_ref=[1.0, 0.0], l1_weight=0.5)
    assert cost.stage([1.0, 1.0], [-1.0]) == pytest.approx(1.0 + 2.0 + 0.5), "stage cost is wrong"
    assert cost.terminal([0.0, 0.0]) == pytest.approx(3.0), "terminal cost is wrong"
    with pytest.raises(RSMPCException):
        StageCost(np.eye(1), np.zeros((1, 1)), np.eye(1))


def test_mean_segment():
    """mean disturbance is padded with zeros"""
    cfg = controller(w_bar=[[0.1], [0.2]]).cfg
    assert np.allclose(cfg.mean_segment(1, 1)[:, 0], [0.2, 0.0, 0.0]), "segment should be shifted and padded"


def test_measurement_enters_prediction_only():
    """only the prediction initialization depends on the measured state"""
    assert controller().measurement_blocks() == ["prediction_init"], "x_true must only enter the prediction"


def test_origin_is_at_rest():
    """zero state gives zero input"""
    mpc = controller()
    solution = mpc.solve_step([0.0], [0.0])
    assert solution.status == "optimal", "step should be solved"
    assert np.allclose(solution.u_applied, 0.0, atol=1e-6), "input at the origin should be zero"
    assert solution.objective == pytest.approx(0.0, abs=1e-6), "cost at the origin should be zero"
    assert abs(solution.alpha[0]) <= 1e-8, "first scaling is zero at k = 0"


def test_tube_starts_from_previous_solution():
    """the tube of step k starts at the second set of step k-1"""
    mpc = controller()
    first = mpc.solve_step([0.5], [0.0])
    assert first.s[0, 0] == pytest.approx(0.5, abs=1e-7), "tube starts at the measured state at k = 0"
    mpc.assemble([0.3], [0.0], first, k=1)
    assert np.array_equal(mpc.parameters["s0"].value, first.s[1]), "s0 should be s_1 of the previous solution"
    assert mpc.parameters["alpha0"].value == first.alpha[1], "alpha0 should be alpha_1 of the previous solution"
    second = mpc.solve_step([0.3], [0.0], first, k=1)
    assert second.x_pred[0, 0] == pytest.approx(0.3, abs=1e-7), "prediction starts at the measured state"
    assert second.u_applied[0] == pytest.approx(second.v[0, 0], abs=1e-9), "u = K x + v_0 with K = 0"


def test_shift():
    """shifted candidate drops the first input and appends zero"""
    mpc = controller()
    prev = MPCStepSolution(
        k=0,
        v=np.array([[1.0], [2.0], [3.0]]),
        s=np.zeros((N + 1, 1)),
        alpha=np.zeros(N + 1),
        Lambda=[[np.zeros((2, 2)), np.zeros((2, 2))] for _ in range(N)],
        x_pred=np.zeros((N + 1, 1)),
        u_pred=np.zeros((N, 1)),
        u_applied=np.zeros(1),
        theta_bar=np.zeros(1),
        objective=0.0,
        status="optimal",
    )
    candidate = mpc.shift(prev)
    assert np.array_equal(candidate.v[:, 0], [2.0, 3.0, 0.0]), "inputs should be (2, 3, 0)"
    assert candidate.terminal_admissible, "origin has an admissible successor"
    assert len(candidate.Lambda) == N - 1, "multipliers of the dropped step are removed"
    hint = candidate.initial_point()
    assert "Lambda_1_0" in hint and "Lambda_2_0" not in hint, "hint covers the shifted multipliers"


def test_shifted_solution_is_feasible():
    """the shifted optimal solution satisfies the constraints of the next step"""
    mpc = controller()
    first = mpc.solve_step([0.8], [0.5])
    report = mpc.feasibility_check(mpc.shift(first), 1)
    assert report.feasible, f"candidate should be feasible, residuals {report.residuals}"


def test_missing_previous_solution():
    """k > 0 needs the previous solution"""
    with pytest.raises(MissingPrevSolution):
        controller().assemble([0.0], [0.0], None, k=1)


def test_infeasible_start():
    """a state outside X cannot start a tube"""
    with pytest.raises(ProblemInfeasible):
        controller().solve_step([5.0], [0.0])


def test_estimate_projection():
    """estimates outside Theta are projected or rejected"""
    solution = controller().solve_step([0.0], [3.0])
    assert solution.theta_bar[0] == pytest.approx(1.0, abs=1e-6), "estimate should be projected onto Theta"
    with pytest.raises(EstimateOutsideTheta):
        controller(project_estimate=False).solve_step([0.0], [3.0])


def test_mismatched_dimensions():
    """gain of the wrong size"""
    mpc = controller()
    cfg = mpc.cfg
    cfg.K = np.zeros((1, 2))
    with pytest.raises(RSMPCException):
        RobustStochasticMPC(scalar_system(), cfg)
