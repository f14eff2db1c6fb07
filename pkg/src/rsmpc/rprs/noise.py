"""noise model of the disturbance sequence W = [w_0, ..., w_{T-1}]"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from rsmpc.constants import VALID_COVARIANCE_KIND, VALID_NOISE_FAMILY
from rsmpc.util.custom_exceptions import RSMPCException


@dataclass(frozen=True)
class NoiseModel:
    """Mean and covariance of W over a horizon of T steps

    covariance_kind "iid" stores the per-step covariance Sigma_w (dim x dim);
    "full" stores the covariance of the stacked sequence (dim*T x dim*T).
    mean always has length dim*T.
    """

    T: int
    dim: int
    mean: np.ndarray
    covariance: np.ndarray
    covariance_kind: str = "iid"
    family: str = "gaussian"

    def __post_init__(self):
        if self.covariance_kind not in VALID_COVARIANCE_KIND:
            raise RSMPCException(f"Invalid covariance kind {self.covariance_kind}")
        if self.family not in VALID_NOISE_FAMILY:
            raise RSMPCException(f"Invalid noise family {self.family}")
        if self.T < 1 or self.dim < 1:
            raise RSMPCException("noise horizon and dimension must be positive")
        mean = np.array(self.mean, dtype=float).reshape(-1)
        if mean.shape[0] != self.dim * self.T:
            raise RSMPCException(
                f"noise mean must have length {self.dim * self.T}, got {mean.shape[0]}"
            )
        covariance = np.array(self.covariance, dtype=float, ndmin=2)
        size = self.dim if self.covariance_kind == "iid" else self.dim * self.T
        if covariance.shape != (size, size):
            raise RSMPCException(
                f"{self.covariance_kind} covariance must be {size}x{size}, got {covariance.shape}"
            )
        if not np.allclose(covariance, covariance.T, atol=1e-12):
            raise RSMPCException("noise covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(covariance)) <= 0:
            raise RSMPCException("noise covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", covariance)

    def block(self, k: int, l: int) -> np.ndarray:
        """cov(w_k, w_l)"""
        if self.covariance_kind == "iid":
            return self.covariance if k == l else np.zeros((self.dim, self.dim))
        d = self.dim
        return self.covariance[k * d : (k + 1) * d, l * d : (l + 1) * d]

    def full_covariance(self) -> np.ndarray:
        """covariance of the stacked sequence W"""
        if self.covariance_kind == "iid":
            return np.kron(np.eye(self.T), self.covariance)
        return self.covariance

    def mean_sequence(self) -> np.ndarray:
        """the mean as a T x dim array"""
        return self.mean.reshape(self.T, self.dim)

    def has_mean(self) -> bool:
        """True if some w_k has nonzero mean"""
        return bool(np.any(self.mean != 0.0))

    def split_mean(self) -> Tuple[np.ndarray, "NoiseModel"]:
        """Splits W into its deterministic mean and a zero-mean part

        Returns:
            Tuple[np.ndarray, NoiseModel]: the T x dim mean sequence and the
                zero-mean model with the same covariance
        """
        return self.mean_sequence().copy(), NoiseModel(
            self.T,
            self.dim,
            np.zeros(self.dim * self.T),
            self.covariance,
            self.covariance_kind,
            self.family,
        )

    def in_state_space(self, B_w: np.ndarray, process_noise: float = 0.0) -> "NoiseModel":
        """The model of B_w w_k, optionally with an extra isotropic process
        noise of variance process_noise on every state"""
        B_w = np.array(B_w, dtype=float, ndmin=2)
        if B_w.shape[1] != self.dim:
            raise RSMPCException(
                f"B_w has {B_w.shape[1]} columns but the noise has dimension {self.dim}"
            )
        n = B_w.shape[0]
        if self.covariance_kind == "iid":
            covariance = B_w @ self.covariance @ B_w.T + process_noise * np.eye(n)
        else:
            lifted = np.kron(np.eye(self.T), B_w)
            covariance = lifted @ self.covariance @ lifted.T + process_noise * np.eye(n * self.T)
        mean = (self.mean_sequence() @ B_w.T).reshape(-1)
        return NoiseModel(self.T, n, mean, covariance, self.covariance_kind, self.family)

    def to_dict(self) -> Dict:
        """JSON-compatible description"""
        return {
            "T": self.T,
            "dim": self.dim,
            "mean": self.mean.tolist(),
            "covariance": self.covariance.tolist(),
            "covariance_kind": self.covariance_kind,
            "family": self.family,
        }


def noise_from_dict(data: Dict) -> NoiseModel:
    """Builds a NoiseModel from the dictionary produced by NoiseModel.to_dict"""
    for key in ("T", "dim", "covariance"):
        if key not in data:
            raise RSMPCException(f"noise description is missing '{key}'")
    T = int(data["T"])
    dim = int(data["dim"])
    mean = data.get("mean")
    if mean is None:
        mean = np.zeros(T * dim)
    return NoiseModel(
        T,
        dim,
        np.asarray(mean, dtype=float),
        np.asarray(data["covariance"], dtype=float),
        data.get("covariance_kind", "iid"),
        data.get("family", "gaussian"),
    )


def ar1_covariance(sigma: np.ndarray, rho: float, T: int) -> np.ndarray:
    """Full covariance of a stacked AR(1)-correlated sequence:
    cov(w_k, w_l) = rho^|k-l| Sigma"""
    sigma = np.array(sigma, dtype=float, ndmin=2)
    lags = np.abs(np.subtract.outer(np.arange(T), np.arange(T)))
    return np.kron(rho ** lags, sigma)
