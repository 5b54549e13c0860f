"""Exact batch GP regression, used to cross-check the online model."""

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import NumericalDegeneracyError
from .kernel import KernelParams, _kvec, gram_matrix
from .validation import check_n_features


class BatchGPRegressor(RegressorMixin, BaseEstimator):
    """Full Gaussian process posterior under Gaussian observation noise.

    Solves against a Cholesky factor of ``K + sigma_n2 * I``; nothing is
    inverted explicitly.

    Parameters
    ----------
    sigma_s2, sigma_n2, lengthscales
        Same meaning as in :class:`~sogpfm.sogp.SparseOnlineGPRegressor`.
        ``sigma_n2`` must be > 0.
    """

    def __init__(self, sigma_s2=1.0, sigma_n2=0.04, lengthscales=1.0):
        self.sigma_s2 = sigma_s2
        self.sigma_n2 = sigma_n2
        self.lengthscales = lengthscales

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if not self.sigma_n2 > 0:
            raise ValueError(f"sigma_n2 must be > 0 for the batch posterior, got {self.sigma_n2!r}")
        lam = np.broadcast_to(np.asarray(self.lengthscales, dtype=float), (X.shape[1],))
        self.kernel_params_ = KernelParams(self.sigma_s2, self.sigma_n2, tuple(lam))
        K = gram_matrix(self.kernel_params_, X) + self.sigma_n2 * np.eye(X.shape[0])
        try:
            self.chol_ = cho_factor(K, lower=True)
        except LinAlgError as exc:
            raise NumericalDegeneracyError(f"Cholesky factorization failed: {exc}") from None
        self.X_train_ = X
        self.y_train_ = y.astype(float)
        self.weights_ = cho_solve(self.chol_, self.y_train_)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X, return_std=False, return_var=False):
        check_is_fitted(self, "weights_")
        X = check_array(X)
        check_n_features(self, X)
        p = self.kernel_params_
        Ks = np.array([_kvec(self.X_train_, x, p.lam, p.sigma_s2) for x in X])
        mean = Ks @ self.weights_
        if not (return_std or return_var):
            return mean
        var = p.sigma_s2 - np.einsum("ij,ji->i", Ks, cho_solve(self.chol_, Ks.T))
        var = np.maximum(var, 0.0)
        return (mean, var) if return_var else (mean, np.sqrt(var))

    def predict_one(self, x):
        """Return ``(mean, variance)`` for a single input."""
        mean, var = self.predict(np.atleast_2d(np.asarray(x, dtype=float)), return_var=True)
        return float(mean[0]), float(var[0])
