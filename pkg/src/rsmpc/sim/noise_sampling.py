"""seeded realizations of a noise model"""

import numpy as np

from rsmpc.rprs.noise import NoiseModel

# uniform on [-sqrt(3), sqrt(3)] has zero mean and unit variance
_UNIFORM_HALF_WIDTH = np.sqrt(3.0)


def _standard_samples(rng: np.random.Generator, family: str, shape) -> np.ndarray:
    if family == "gaussian":
        return rng.standard_normal(shape)
    return rng.uniform(-_UNIFORM_HALF_WIDTH, _UNIFORM_HALF_WIDTH, shape)


def sample_noise(nm: NoiseModel, seed: int, count: int | None = None) -> np.ndarray:
    """Draws realizations of W, deterministic given the seed

    Gaussian models are sampled from N(mean, Sigma_W). Moment-only models
    are sampled from a bounded surrogate, unit-variance uniforms mapped
    through the Cholesky factor of Sigma_W, which has the same mean and
    covariance.

    Args:
        nm (NoiseModel): the model
        seed (int): the seed
        count (int) [None]: number of realizations

    Returns:
        np.ndarray: T x dim, or count x T x dim when count is given
    """
    rng = np.random.default_rng(seed)
    batch = 1 if count is None else count
    mean = nm.mean_sequence()
    L = np.linalg.cholesky(nm.covariance)
    if nm.covariance_kind == "iid":
        samples = _standard_samples(rng, nm.family, (batch, nm.T, nm.dim)) @ L.T
    else:
        flat = _standard_samples(rng, nm.family, (batch, nm.T * nm.dim)) @ L.T
        samples = flat.reshape(batch, nm.T, nm.dim)
    samples = samples + mean
    if count is None:
        return samples[0]
    return samples
