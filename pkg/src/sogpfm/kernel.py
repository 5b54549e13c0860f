"""ARD Gaussian kernel.

The diagonal entries of ``lengthscale_diag`` multiply the squared input
differences directly, i.e. they are inverse squared length scales::

    k(x, x') = sigma_s2 * exp(-0.5 * sum_i l_i * (x_i - x'_i) ** 2)
"""

from dataclasses import dataclass

import numpy as np

from .validation import as_matrix, as_vector, check_positive


@dataclass(frozen=True)
class KernelParams:
    """Hyperparameters of the Gaussian kernel and the observation noise.

    Parameters
    ----------
    sigma_s2 : float
        Signal variance, > 0.
    sigma_n2 : float
        Observation noise variance, >= 0. Not used by the kernel itself.
    lengthscale_diag : tuple of float
        Diagonal of the (inverse squared) length-scale matrix, one entry per
        input dimension.
    """

    sigma_s2: float
    sigma_n2: float
    lengthscale_diag: tuple

    def __post_init__(self):
        check_positive(self.sigma_s2, "sigma_s2")
        check_positive(self.sigma_n2, "sigma_n2", strict=False)
        diag = tuple(float(v) for v in np.atleast_1d(np.asarray(self.lengthscale_diag, dtype=float)))
        if len(diag) < 1:
            raise ValueError("lengthscale_diag must have at least one entry")
        if not all(np.isfinite(v) and v > 0 for v in diag):
            raise ValueError(f"lengthscale_diag entries must be > 0, got {diag}")
        object.__setattr__(self, "sigma_s2", float(self.sigma_s2))
        object.__setattr__(self, "sigma_n2", float(self.sigma_n2))
        object.__setattr__(self, "lengthscale_diag", diag)

    @property
    def dim(self):
        return len(self.lengthscale_diag)

    @property
    def lam(self):
        """Length-scale diagonal as an array."""
        return np.asarray(self.lengthscale_diag)


def kernel_eval(params, x, x_prime):
    """Kernel value between two input vectors."""
    x = as_vector(x, params.dim, "x")
    x_prime = as_vector(x_prime, params.dim, "x_prime")
    return float(_kvec(x_prime[None, :], x, params.lam, params.sigma_s2)[0])


def kernel_vector(params, X, x):
    """Kernel values between every row of ``X`` and ``x``."""
    X = as_matrix(X, params.dim, "X")
    x = as_vector(x, params.dim, "x")
    return _kvec(X, x, params.lam, params.sigma_s2)


def gram_matrix(params, X):
    """Symmetric matrix of pairwise kernel values between the rows of ``X``."""
    X = as_matrix(X, params.dim, "X")
    if X.shape[0] < 1:
        raise ValueError("gram_matrix needs at least one row")
    diff = X[:, None, :] - X[None, :, :]
    return params.sigma_s2 * np.exp(-0.5 * np.sum(diff * diff * params.lam, axis=-1))


def _kvec(X, x, lam, sigma_s2):
    # unchecked fast path used in tight loops
    if X.shape[0] == 0:
        return np.zeros(0)
    # same reduction everywhere so gram entries match kernel_eval bit-for-bit
    diff = X - x
    return sigma_s2 * np.exp(-0.5 * np.sum(diff * diff * lam, axis=-1))
