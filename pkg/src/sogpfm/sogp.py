"""Sparse online Gaussian process regression with a bounded basis set.

The model keeps a set of basis vectors (BV) together with a coefficient
vector ``alpha``, a covariance correction ``C`` and the inverse Gram matrix
``Q`` of the basis. New observations are absorbed one at a time; inputs
whose kernel function is poorly represented by the current basis (novelty
above ``eps_tol``) are added to the basis, others only adjust ``alpha``
and ``C``. Once the basis exceeds ``capacity`` one vector is removed
according to the deletion policy:

``"pis"``
    remove the vector with the smallest information score
    ``|alpha_j| / K(j, j)``.
``"ops"``
    remove the oldest vector.
``"fs"``
    remove the oldest vector whenever the number of admitted points is a
    multiple of ``forget_period``, otherwise behave like ``"pis"``.

Basis indices are zero-based; index 0 is always the oldest survivor.
"""

from dataclasses import dataclass
import numbers

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import NumericalDegeneracyError
from .kernel import KernelParams, _kvec, gram_matrix
from .validation import as_vector, check_n_features

POLICIES = ("pis", "ops", "fs")

_DEGENERATE_PIVOT = 1e-12
_NOVELTY_FLOOR = np.finfo(float).eps


@dataclass(frozen=True)
class DeletionPolicy:
    """Which basis vector to evict once the basis is over capacity.

    ``h`` is the forgetting period and is only consulted for ``kind="fs"``.
    """

    kind: str
    h: int = 1

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown deletion policy {self.kind!r}; expected one of {POLICIES}")
        if self.kind == "fs" and (
            isinstance(self.h, bool) or not isinstance(self.h, numbers.Integral) or self.h < 1
        ):
            raise ValueError(f"forgetting period h must be a positive integer, got {self.h!r}")


@dataclass
class UpdateReport:
    """Outcome of a single streaming update.

    Attributes
    ----------
    branch : str
        ``"full"`` if the point joined the basis, ``"reduced"`` otherwise.
    novelty : float
        Projection residual of the input against the basis before the update.
    deleted_index : int or None
        Basis index removed because of the capacity limit.
    deletion_rule : str or None
        ``"oldest"`` or ``"score"``, the rule that picked ``deleted_index``.
    variance : float
        Unclamped predictive variance at the input before the update.
    """

    branch: str
    novelty: float
    variance: float = float("nan")
    deleted_index: int = None
    deletion_rule: str = None


class SparseOnlineGPRegressor(RegressorMixin, BaseEstimator):
    """Sparse online GP regressor with capacity-bounded basis deletion.

    Parameters
    ----------
    sigma_s2 : float, default=1.0
        Signal variance of the Gaussian kernel.
    sigma_n2 : float, default=0.04
        Observation noise variance.
    lengthscales : float or array-like of shape (n_features,), default=1.0
        Inverse squared length scales; they multiply the squared input
        differences. A scalar is broadcast to every input dimension.
    capacity : int, default=45
        Maximum number of basis vectors.
    eps_tol : float, default=0.01
        Novelty threshold; a point joins the basis only if its novelty is
        strictly greater than this value.
    policy : {"pis", "ops", "fs"}, default="fs"
        Deletion policy used at capacity.
    forget_period : int, default=15
        Forgetting period for ``policy="fs"``.
    signed_score : bool, default=False
        Rank deletion candidates by the signed coefficient ``alpha_j`` instead
        of its magnitude. Only meant for comparison runs.

    Attributes
    ----------
    basis_vectors_ : ndarray of shape (m, n_features)
        Basis vectors in insertion order (row 0 is the oldest).
    alpha_ : ndarray of shape (m,)
    C_ : ndarray of shape (m, m)
    Q_ : ndarray of shape (m, m)
        Inverse Gram matrix of ``basis_vectors_``.
    n_added_ : int
        Number of points ever admitted to the basis.
    kernel_params_ : KernelParams
    policy_ : DeletionPolicy
    n_features_in_ : int
    """

    def __init__(
        self,
        sigma_s2=1.0,
        sigma_n2=0.04,
        lengthscales=1.0,
        capacity=45,
        eps_tol=0.01,
        policy="fs",
        forget_period=15,
        signed_score=False,
    ):
        self.sigma_s2 = sigma_s2
        self.sigma_n2 = sigma_n2
        self.lengthscales = lengthscales
        self.capacity = capacity
        self.eps_tol = eps_tol
        self.policy = policy
        self.forget_period = forget_period
        self.signed_score = signed_score

    # ------------------------------------------------------------------
    # state management

    def _validate_hyperparameters(self):
        if isinstance(self.capacity, bool) or not isinstance(self.capacity, numbers.Integral) or self.capacity < 1:
            raise ValueError(f"capacity must be a positive integer, got {self.capacity!r}")
        if not np.isfinite(self.eps_tol) or self.eps_tol < 0:
            raise ValueError(f"eps_tol must be >= 0, got {self.eps_tol!r}")

    def _initialize(self, n_features):
        self._validate_hyperparameters()
        lam = np.broadcast_to(np.asarray(self.lengthscales, dtype=float), (n_features,))
        self.kernel_params_ = KernelParams(self.sigma_s2, self.sigma_n2, tuple(lam))
        self.policy_ = DeletionPolicy(self.policy, self.forget_period)
        self.n_features_in_ = n_features
        self.basis_vectors_ = np.zeros((0, n_features))
        self.alpha_ = np.zeros(0)
        self.C_ = np.zeros((0, 0))
        self.Q_ = np.zeros((0, 0))
        self.n_added_ = 0
        self._lam = self.kernel_params_.lam
        self._gram = np.zeros((0, 0))
        return self

    def initialize(self, n_features):
        """Reset to an empty model for inputs of dimension ``n_features``."""
        return self._initialize(int(n_features))

    @property
    def n_basis(self):
        return self.alpha_.shape[0]

    def fit(self, X, y):
        """Reset the model and stream every row of ``X`` through :meth:`update`."""
        X, y = check_X_y(X, y, y_numeric=True)
        self._initialize(X.shape[1])
        for x, target in zip(X, y):
            self._update(x, float(target))
        return self

    def partial_fit(self, X, y):
        """Stream additional observations into the current model."""
        X, y = check_X_y(X, y, y_numeric=True)
        if not hasattr(self, "alpha_"):
            self._initialize(X.shape[1])
        else:
            check_n_features(self, X)
        for x, target in zip(X, y):
            self._update(x, float(target))
        return self

    # ------------------------------------------------------------------
    # prediction

    def predict(self, X, return_std=False):
        """Posterior mean (and optionally standard deviation) at rows of ``X``."""
        check_is_fitted(self, "alpha_")
        X = check_array(X)
        check_n_features(self, X)
        out = np.array([self._predict_raw(x) for x in X]).reshape(-1, 2)
        mean, var = out[:, 0], np.maximum(out[:, 1], 0.0)
        if return_std:
            return mean, np.sqrt(var)
        return mean

    def predict_one(self, x):
        """Return ``(mean, variance)`` for a single input; variance is clamped at 0."""
        check_is_fitted(self, "alpha_")
        x = as_vector(x, self.n_features_in_)
        mean, var = self._predict_raw(x)
        return mean, max(var, 0.0)

    def predict_unclamped(self, x):
        """Like :meth:`predict_one` but without clamping the variance."""
        check_is_fitted(self, "alpha_")
        return self._predict_raw(as_vector(x, self.n_features_in_))

    def predict_mean_fast(self, x):
        # no validation; used once per control tick
        if self.alpha_.shape[0] == 0:
            return 0.0
        k = _kvec(self.basis_vectors_, x, self._lam, self.kernel_params_.sigma_s2)
        return float(self.alpha_ @ k)

    def _predict_raw(self, x, k=None):
        s2 = self.kernel_params_.sigma_s2
        if self.alpha_.shape[0] == 0:
            return 0.0, s2
        if k is None:
            k = _kvec(self.basis_vectors_, x, self._lam, s2)
        mean = float(self.alpha_ @ k)
        var = s2 + float(k @ (self.C_ @ k))
        return mean, var

    def novelty(self, x):
        """Squared residual of projecting ``k(x, .)`` onto the basis span."""
        check_is_fitted(self, "alpha_")
        x = as_vector(x, self.n_features_in_)
        gamma, _, _ = self._novelty_raw(x)
        return gamma

    def _novelty_raw(self, x):
        s2 = self.kernel_params_.sigma_s2
        if self.alpha_.shape[0] == 0:
            return s2, np.zeros(0), np.zeros(0)
        k = _kvec(self.basis_vectors_, x, self._lam, s2)
        dup = np.flatnonzero(k == s2)
        if dup.size:
            # kernel function identical to a basis vector's: exact projection
            e_hat = np.zeros_like(k)
            e_hat[dup[0]] = 1.0
            return 0.0, k, e_hat
        e_hat = self.Q_ @ k
        # one step of iterative refinement; without it the 1/gamma scaling in
        # the inverse-Gram update amplifies rounding error in e_hat
        e_hat += self.Q_ @ (k - self._gram @ e_hat)
        gamma = max(s2 - float(k @ e_hat), 0.0)
        return gamma, k, e_hat

    def gaussian_qr(self, x, y):
        """First and second derivative of the log evidence for a Gaussian likelihood."""
        check_is_fitted(self, "alpha_")
        x = as_vector(x, self.n_features_in_)
        mean, var = self._predict_raw(x)
        return self._qr(mean, max(var, 0.0), float(y))

    def _qr(self, mean, var, y):
        denom = self.kernel_params_.sigma_n2 + var
        if not denom > 0:
            raise NumericalDegeneracyError(f"noise + predictive variance is {denom!r}, must be > 0")
        return (y - mean) / denom, -1.0 / denom

    # ------------------------------------------------------------------
    # streaming update

    def update(self, x, y):
        """Absorb a single observation and return an :class:`UpdateReport`."""
        check_is_fitted(self, "alpha_")
        x = as_vector(x, self.n_features_in_)
        return self._update(x, float(y))

    def _update(self, x, y):
        gamma, k, e_hat = self._novelty_raw(x)
        if k.shape[0]:
            Ck = self.C_ @ k
            mean = float(self.alpha_ @ k)
            raw_var = self.kernel_params_.sigma_s2 + float(k @ Ck)
        else:
            Ck = k
            mean, raw_var = 0.0, self.kernel_params_.sigma_s2
        q, r = self._qr(mean, max(raw_var, 0.0), y)

        s2 = self.kernel_params_.sigma_s2
        floor = _NOVELTY_FLOOR * s2
        if self.eps_tol < floor and not gamma > floor and not np.any(k == s2):
            # the computed novelty is below its own rounding error (or not
            # finite once Q has lost all accuracy); a tolerance this small asks
            # for every distinct point to be admitted, and the full-branch
            # alpha/C update does not depend on Q
            gamma = floor

        if gamma > self.eps_tol:
            m = self.alpha_.shape[0]
            s = np.append(Ck, 1.0)
            self.alpha_ = np.append(self.alpha_, 0.0) + q * s
            C = np.zeros((m + 1, m + 1))
            C[:m, :m] = self.C_
            C += r * np.outer(s, s)
            self.C_ = 0.5 * (C + C.T)
            v = np.append(e_hat, -1.0)
            Q = np.zeros((m + 1, m + 1))
            Q[:m, :m] = self.Q_
            Q += np.outer(v, v) / gamma
            self.Q_ = 0.5 * (Q + Q.T)
            G = np.empty((m + 1, m + 1))
            G[:m, :m] = self._gram
            G[m, :m] = G[:m, m] = k
            G[m, m] = self.kernel_params_.sigma_s2
            self._gram = G
            self.basis_vectors_ = np.vstack([self.basis_vectors_, x[None, :]])
            self.n_added_ += 1
            report = UpdateReport("full", gamma, raw_var)
            if m + 1 > self.capacity:
                index, rule = self._select_deletion()
                self._delete(index)
                report.deleted_index = index
                report.deletion_rule = rule
            return report

        s_hat = Ck + e_hat
        self.alpha_ = self.alpha_ + q * s_hat
        C = self.C_ + r * np.outer(s_hat, s_hat)
        self.C_ = 0.5 * (C + C.T)
        return UpdateReport("reduced", gamma, raw_var)

    # ------------------------------------------------------------------
    # deletion

    def deletion_scores(self):
        """Information score of every basis vector (lower is evicted first)."""
        check_is_fitted(self, "alpha_")
        # Gaussian kernel: K(j, j) == sigma_s2 for every j
        diag = np.full(self.alpha_.shape[0], self.kernel_params_.sigma_s2)
        alpha = self.alpha_ if self.signed_score else np.abs(self.alpha_)
        return alpha / diag

    def select_deletion_index(self):
        """Index the policy would evict from the current basis."""
        check_is_fitted(self, "alpha_")
        if self.alpha_.shape[0] == 0:
            raise ValueError("cannot select a deletion index from an empty basis")
        return self._select_deletion()[0]

    def _select_deletion(self):
        kind = self.policy_.kind
        if kind == "ops" or (kind == "fs" and self.n_added_ % self.policy_.h == 0):
            return 0, "oldest"
        # argmin returns the first minimum, so ties go to the older vector
        return int(np.argmin(self.deletion_scores())), "score"

    def delete_index(self, i):
        """Remove basis vector ``i`` and project its information onto the rest."""
        check_is_fitted(self, "alpha_")
        m = self.alpha_.shape[0]
        if isinstance(i, bool) or not isinstance(i, numbers.Integral) or not 0 <= i < m:
            raise ValueError(f"basis index {i!r} out of range for a basis of size {m}")
        self._delete(int(i))
        return self

    def _delete(self, i):
        q_star = self.Q_[i, i]
        if not abs(q_star) >= _DEGENERATE_PIVOT:
            raise NumericalDegeneracyError(
                f"inverse-Gram pivot {q_star!r} at basis index {i} is degenerate"
            )
        a_star = self.alpha_[i]
        c_star = self.C_[i, i]
        keep = np.arange(self.alpha_.shape[0]) != i
        Q_col = self.Q_[keep, i]
        C_col = self.C_[keep, i]
        Q_r = self.Q_[np.ix_(keep, keep)]
        C_r = self.C_[np.ix_(keep, keep)]

        self.alpha_ = self.alpha_[keep] - (a_star / q_star) * Q_col
        QQ = np.outer(Q_col, Q_col)
        QC = np.outer(Q_col, C_col)
        C = C_r + (c_star / q_star**2) * QQ - (QC + QC.T) / q_star
        self.C_ = 0.5 * (C + C.T)
        Q = Q_r - QQ / q_star
        self.Q_ = 0.5 * (Q + Q.T)
        self.basis_vectors_ = self.basis_vectors_[keep]
        self._gram = self._gram[np.ix_(keep, keep)]

    # ------------------------------------------------------------------
    # diagnostics and persistence

    def inverse_gram_residual(self):
        """Max absolute row sum of ``Q K - I`` over the current basis (0 if empty)."""
        check_is_fitted(self, "alpha_")
        m = self.alpha_.shape[0]
        if m == 0:
            return 0.0
        R = self.Q_ @ gram_matrix(self.kernel_params_, self.basis_vectors_) - np.eye(m)
        return float(np.max(np.sum(np.abs(R), axis=1)))

    def to_snapshot(self):
        """Serialize the fitted state to text; see :func:`dumps`."""
        return dumps(self)

    @classmethod
    def from_snapshot(cls, text):
        return loads(text)

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(dumps(self))

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return loads(fh.read())


# ----------------------------------------------------------------------
# text snapshots
#
# Layout (one record per line, numbers in %.17g):
#   sogp-snapshot d=<d> m=<m> n_added=<N> policy=<pis|ops|fs> h=<h>
#       capacity=<cap> eps_tol=<eps> signed_score=<0|1> sigma_s2=<s2>
#       sigma_n2=<n2> lengthscales=<l1,...,ld>          (single line)
#   m lines    basis vectors, d values each
#   1 line     alpha, m values (blank when m == 0)
#   m lines    C, m values each
#   m lines    Q, m values each

_MAGIC = "sogp-snapshot"


def _fmt(values):
    return " ".join("%.17g" % v for v in values)


def dumps(model):
    """Serialize a fitted :class:`SparseOnlineGPRegressor` to a text snapshot."""
    check_is_fitted(model, "alpha_")
    p = model.kernel_params_
    header = (
        f"{_MAGIC} d={model.n_features_in_} m={model.n_basis} n_added={model.n_added_} "
        f"policy={model.policy_.kind} h={model.policy_.h} capacity={model.capacity} "
        f"eps_tol={'%.17g' % model.eps_tol} signed_score={int(bool(model.signed_score))} "
        f"sigma_s2={'%.17g' % p.sigma_s2} sigma_n2={'%.17g' % p.sigma_n2} "
        f"lengthscales={','.join('%.17g' % v for v in p.lengthscale_diag)}"
    )
    lines = [header]
    lines += [_fmt(row) for row in model.basis_vectors_]
    lines.append(_fmt(model.alpha_))
    lines += [_fmt(row) for row in model.C_]
    lines += [_fmt(row) for row in model.Q_]
    return "\n".join(lines) + "\n"


def loads(text):
    """Rebuild a :class:`SparseOnlineGPRegressor` from :func:`dumps` output."""
    lines = text.split("\n")
    fields = lines[0].split()
    if not fields or fields[0] != _MAGIC:
        raise ValueError("not a sogp snapshot: bad header")
    try:
        meta = dict(f.split("=", 1) for f in fields[1:])
        d, m = int(meta["d"]), int(meta["m"])
        model = SparseOnlineGPRegressor(
            sigma_s2=float(meta["sigma_s2"]),
            sigma_n2=float(meta["sigma_n2"]),
            lengthscales=[float(v) for v in meta["lengthscales"].split(",")],
            capacity=int(meta["capacity"]),
            eps_tol=float(meta["eps_tol"]),
            policy=meta["policy"],
            forget_period=int(meta["h"]),
            signed_score=bool(int(meta["signed_score"])),
        )
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed sogp snapshot header: {exc}") from None

    def rows(start, count, width):
        out = np.zeros((count, width))
        for j in range(count):
            vals = lines[start + j].split()
            if len(vals) != width:
                raise ValueError(f"snapshot line {start + j + 1}: expected {width} values")
            out[j] = [float(v) for v in vals]
        return out

    if len(lines) < 1 + 3 * m + 1:
        raise ValueError("truncated sogp snapshot")
    model._initialize(d)
    model.basis_vectors_ = rows(1, m, d)
    model.alpha_ = rows(1 + m, 1, m)[0] if m else np.zeros(0)
    model.C_ = rows(2 + m, m, m)
    model.Q_ = rows(2 + 2 * m, m, m)
    model.n_added_ = int(meta["n_added"])
    # same reduction as the incremental path, so this is bit-identical
    model._gram = gram_matrix(model.kernel_params_, model.basis_vectors_) if m else np.zeros((0, 0))
    return model
