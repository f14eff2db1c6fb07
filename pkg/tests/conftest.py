"""shared reference computations for the tests"""

from typing import List

import numpy as np
import pytest


def _smallest_c(a, b, M: np.ndarray):
    """smallest c with [[a, b], [b, c]] >= M_j for every j, vectorized over
    the grid (a, b); inf where no c works"""
    m11, m12, m22 = M[:, 0, 0], M[:, 0, 1], M[:, 1, 1]
    slack_a = a[..., None] - m11
    valid = np.all(slack_a > 0, axis=-1)
    slack_a = np.where(slack_a > 0, slack_a, 1.0)
    # [[a - m11, b - m12], [b - m12, c - m22]] >= 0 fixes c once a > m11
    needed = m22 + (b[..., None] - m12) ** 2 / slack_a
    c = np.max(needed, axis=-1)
    return np.where(valid, c, np.inf)


def min_logdet_dominating(matrices: List[np.ndarray], points: int = 201, rounds: int = 6) -> float:
    """log det of the smallest (by determinant) 2 x 2 X with X >= M_j for
    every j, by a grid search over (X_11, X_12) refined around the best point"""
    M = np.array([(m + m.T) / 2 for m in matrices])
    scale = max(float(np.max(np.linalg.eigvalsh(m))) for m in M)
    a_lo = float(np.max(M[:, 0, 0]))
    a_range = (a_lo, a_lo + 8.0 * scale)
    b_range = (-8.0 * scale, 8.0 * scale)
    best = np.inf
    for _ in range(rounds):
        a_axis = np.linspace(*a_range, points)
        b_axis = np.linspace(*b_range, points)
        a, b = np.meshgrid(a_axis, b_axis, indexing="ij")
        c = _smallest_c(a, b, M)
        det = np.where(np.isfinite(c), a * c - b**2, np.inf)
        det = np.where(det > 0, det, np.inf)
        i, j = np.unravel_index(np.argmin(det), det.shape)
        best = min(best, float(np.log(det[i, j])))
        da = a_axis[1] - a_axis[0]
        db = b_axis[1] - b_axis[0]
        a_range = (max(a_lo, a_axis[i] - 2 * da), a_axis[i] + 2 * da)
        b_range = (b_axis[j] - 2 * db, b_axis[j] + 2 * db)
    return best


@pytest.fixture
def logdet_oracle():
    """brute force minimum log det over the 2 x 2 matrices dominating a list"""
    return min_logdet_dominating
