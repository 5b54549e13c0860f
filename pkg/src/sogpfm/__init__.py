"""Sparse online Gaussian processes with a forgetting deletion policy.

The estimator lives in :mod:`sogpfm.sogp`; the remaining modules build a
two-link arm tracking benchmark around it.
"""

from .gp_oracle import BatchGPRegressor
from .kernel import KernelParams, gram_matrix, kernel_eval, kernel_vector
from .sogp import DeletionPolicy, SparseOnlineGPRegressor, UpdateReport

__all__ = [
    "BatchGPRegressor",
    "DeletionPolicy",
    "KernelParams",
    "SparseOnlineGPRegressor",
    "UpdateReport",
    "gram_matrix",
    "kernel_eval",
    "kernel_vector",
]

__version__ = "0.1.0"
