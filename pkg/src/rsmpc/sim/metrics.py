"""empirical metrics over sets of closed loop traces"""

import logging
from dataclasses import dataclass
from typing import Dict, List, NamedTuple

import numpy as np

from rsmpc.sim.closed_loop import ClosedLoopTrace
from rsmpc.util.custom_exceptions import RSMPCException, SeedMismatch

logger = logging.getLogger("rsmpc_metrics")


class Satisfaction(NamedTuple):
    """N_c(k) in percent for every step, its minimum N_c and the number of
    halted traces left out"""

    per_step: np.ndarray
    minimum: float
    excluded: int


def empirical_satisfaction(
    traces: List[ClosedLoopTrace], row, threshold: float = 1.0
) -> Satisfaction:
    """Percentage of traces with row^T x_k <= threshold at each step k, and
    the minimum over k

    Halted traces are left out and counted.

    Args:
        traces (List[ClosedLoopTrace]): the traces
        row: normal of the constraint in state space
        threshold (float) [1.0]: right hand side of the constraint
    """
    if len(traces) == 0:
        raise RSMPCException("empirical satisfaction needs at least one trace")
    row = np.asarray(row, dtype=float).reshape(-1)
    complete = [trace for trace in traces if not trace.halted]
    excluded = len(traces) - len(complete)
    if excluded > 0:
        logger.warning("%s halted traces excluded from the satisfaction count", str(excluded))
    if len(complete) == 0:
        return Satisfaction(np.zeros(0), float("nan"), excluded)
    steps = min(trace.x.shape[0] for trace in complete)
    satisfied = np.array([trace.x[:steps] @ row <= threshold for trace in complete])
    per_step = 100.0 * np.mean(satisfied, axis=0)
    return Satisfaction(per_step, float(np.min(per_step)), excluded)


@dataclass
class CostIncrease:
    """percentage increase of the closed loop cost over a baseline, per seed"""

    per_seed: Dict[int, float]
    mean: float
    std: float

    @property
    def band(self):
        """mean -+ 2 standard deviations"""
        return self.mean - 2 * self.std, self.mean + 2 * self.std


def _percentage_increase(cost: float, baseline: float) -> float:
    if cost == baseline:
        return 0.0
    if baseline == 0.0:
        return float("inf")
    return 100.0 * (cost - baseline) / baseline


def cost_increase_stats(
    traces: List[ClosedLoopTrace], baseline_traces: List[ClosedLoopTrace]
) -> CostIncrease:
    """Per-seed percentage increase of the accumulated cost of traces over
    baseline_traces, with mean and standard deviation

    Raises:
        SeedMismatch: if the two sets are not paired by seed
    """
    costs = {trace.seed: trace.total_cost for trace in traces}
    baseline = {trace.seed: trace.total_cost for trace in baseline_traces}
    if (
        set(costs) != set(baseline)
        or len(costs) != len(traces)
        or len(baseline) != len(baseline_traces)
    ):
        raise SeedMismatch("trace sets are not paired by seed")
    per_seed = {seed: _percentage_increase(costs[seed], baseline[seed]) for seed in costs}
    values = np.array(list(per_seed.values()))
    return CostIncrease(per_seed, float(np.mean(values)), float(np.std(values)))


def running_l2_average(traces: List[ClosedLoopTrace]) -> np.ndarray:
    """entry t-1 is the mean over traces of (1/t) sum_{k<t} |x_k|^2"""
    steps = min(trace.x.shape[0] for trace in traces)
    squared = np.array([np.sum(trace.x[:steps] ** 2, axis=1) for trace in traces])
    running = np.cumsum(squared, axis=1) / np.arange(1, steps + 1)
    return np.mean(running, axis=0)


def relative_variation(sequence: np.ndarray, tail: float = 0.25) -> float:
    """(max - min) / mean over the last fraction tail of the sequence"""
    sequence = np.asarray(sequence, dtype=float)
    last = sequence[int(np.floor((1.0 - tail) * len(sequence))) :]
    level = float(np.mean(last))
    if level == 0.0:
        return 0.0
    return float((np.max(last) - np.min(last)) / level)


class YoungCheck(NamedTuple):
    lhs: float
    rhs: float
    holds: bool


def young_sample_check(
    x_samples: np.ndarray, y_samples: np.ndarray, R: np.ndarray, epsilon: float
) -> YoungCheck:
    """Sample version of E|x + y|_R^2 <= (1 + eps) E|x|_R^2 + (1 + 1/eps) E|y|_R^2
    for independent x and y given one sample per row"""
    if epsilon <= 0:
        raise RSMPCException("epsilon must be positive")
    x_samples = np.atleast_2d(x_samples)
    y_samples = np.atleast_2d(y_samples)
    R = np.array(R, dtype=float, ndmin=2)

    def quad(samples):
        return np.einsum("ij,jk,ik->i", samples, R, samples)

    lhs = float(np.mean(quad(x_samples + y_samples)))
    rhs = float(
        (1 + epsilon) * np.mean(quad(x_samples)) + (1 + 1 / epsilon) * np.mean(quad(y_samples))
    )
    return YoungCheck(lhs, rhs, lhs <= rhs * (1 + 1e-12) + 1e-12)
