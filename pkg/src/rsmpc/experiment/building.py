"""synthetic four room thermal model (RC network, explicit Euler)

Rooms sit on a 2x2 grid, rooms 1-2, 1-3, 2-4 and 3-4 share a wall and every
room has one outside wall. States and the disturbance are deviations from
the reference temperature, so that the rows of A plus B_w sum to one and
the deviation model has no affine term. The uncertain parameters scale the
1-2 and 1-3 conductances by +-10 percent. All numbers are synthetic.
"""

from typing import Dict

import numpy as np

_ROOMS = 4
_WALLS = [(0, 1), (0, 2), (1, 3), (2, 3)]
_UNCERTAIN_WALLS = [(0, 1), (0, 2)]

DEFAULT_BUILDING = {
    "dt": 1.0,
    "capacitance": 10.0,
    "conductance_rooms": 0.5,
    "conductance_outside": 0.2,
    "perturbation": 0.1,
    "band": 1.0,
    "u_max": 4.5,
}


def _wall_laplacian(i: int, j: int) -> np.ndarray:
    d = np.zeros(_ROOMS)
    d[i] = 1.0
    d[j] = -1.0
    return np.outer(d, d)


def building_system(params: Dict | None = None) -> Dict:
    """System description of the building, in the schema of system_from_dict,
    with Theta the unit box in R^2

    Args:
        params (Dict) [None]: overrides of DEFAULT_BUILDING

    Returns:
        Dict: A (A_0, A_1, A_2), B, B_w, Theta, X, U
    """
    p = dict(DEFAULT_BUILDING)
    if params is not None:
        p.update({key: value for key, value in params.items() if key in DEFAULT_BUILDING})
    step = p["dt"] / p["capacitance"]
    laplacian = sum(_wall_laplacian(i, j) for i, j in _WALLS) * p["conductance_rooms"]
    A0 = np.eye(_ROOMS) - step * (laplacian + p["conductance_outside"] * np.eye(_ROOMS))
    A_params = [
        -step * p["perturbation"] * p["conductance_rooms"] * _wall_laplacian(i, j)
        for i, j in _UNCERTAIN_WALLS
    ]
    B = step * np.eye(_ROOMS)
    B_w = step * p["conductance_outside"] * np.ones((_ROOMS, 1))
    box = np.vstack([np.eye(_ROOMS), -np.eye(_ROOMS)])
    return {
        "A": [A0.tolist()] + [A.tolist() for A in A_params],
        "B": [B.tolist()] + [np.zeros((_ROOMS, _ROOMS)).tolist()] * len(A_params),
        "B_w": B_w.tolist(),
        "Theta": {
            "H": np.vstack([np.eye(2), -np.eye(2)]).tolist(),
            "h": np.ones(4).tolist(),
        },
        "X": {"H": (box / p["band"]).tolist(), "h": np.ones(2 * _ROOMS).tolist()},
        "U": {"H": (box / p["u_max"]).tolist(), "h": np.ones(2 * _ROOMS).tolist()},
    }


def sinusoidal_mean(
    T: int, offset: float, amplitude: float, period: float, phase: float = 0.0
) -> np.ndarray:
    """offset + amplitude sin(2 pi (k + phase) / period) for k = 0..T-1"""
    k = np.arange(T)
    return offset + amplitude * np.sin(2 * np.pi * (k + phase) / period)
