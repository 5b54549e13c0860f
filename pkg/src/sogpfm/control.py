"""Learning feedforward + PD feedback controller built on a bank of per-joint SOGPs."""

import os
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .sogp import SparseOnlineGPRegressor
from .validation import as_vector, check_positive, check_positive_int

MIN_NORMALIZER_SAMPLES = 10
SCALE_FLOOR = 1e-6


@dataclass
class ControllerConfig:
    """Gains, timing and per-joint GP settings.

    ``lengthscales`` holds one inverse squared length scale per GP input
    (``3 * n_joints`` of them) or a single broadcast value.
    """

    kp: tuple = (200.0, 200.0)
    kd: tuple = (20.0, 20.0)
    ramp_duration: float = 0.6
    warmup_duration: float = 2.0
    update_stride: int = 7
    capacity: int = 45
    eps_tol: float = 0.01
    policy: str = "fs"
    forget_period: int = 15
    sigma_s2: float = 1.0
    sigma_n2: float = 0.04
    lengthscales: tuple = (0.5, 0.5, 0.5, 0.5, 0.2, 0.2)
    signed_score: bool = False

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        self.kd = np.asarray(self.kd, dtype=float)
        if self.kp.shape != self.kd.shape or self.kp.ndim != 1:
            raise ValueError("kp and kd must be vectors of equal length")
        if np.any(self.kp <= 0) or np.any(self.kd <= 0):
            raise ValueError("kp and kd entries must be > 0")
        check_positive(self.ramp_duration, "ramp_duration", strict=False)
        check_positive(self.warmup_duration, "warmup_duration", strict=False)
        check_positive_int(self.update_stride, "update_stride")

    @property
    def n_joints(self):
        return self.kp.shape[0]

    def make_model(self):
        return SparseOnlineGPRegressor(
            sigma_s2=self.sigma_s2,
            sigma_n2=self.sigma_n2,
            lengthscales=self.lengthscales,
            capacity=self.capacity,
            eps_tol=self.eps_tol,
            policy=self.policy,
            forget_period=self.forget_period,
            signed_score=self.signed_score,
        )


class TargetNormalizer(TransformerMixin, BaseEstimator):
    """Per-column z-scoring with a floored scale.

    ``fit`` needs at least ten rows; the standard deviation is the population
    one (``ddof=0``).
    """

    def __init__(self, scale_floor=SCALE_FLOOR):
        self.scale_floor = scale_floor

    def fit(self, Y, y=None):
        Y = check_array(Y, ensure_min_samples=1)
        if Y.shape[0] < MIN_NORMALIZER_SAMPLES:
            raise ValueError(
                f"need at least {MIN_NORMALIZER_SAMPLES} samples to fit the normalizer, got {Y.shape[0]}"
            )
        self.mean_ = Y.mean(axis=0)
        self.scale_ = np.maximum(Y.std(axis=0), self.scale_floor)
        self.n_features_in_ = Y.shape[1]
        return self

    def transform(self, Y):
        check_is_fitted(self, "mean_")
        return (np.asarray(Y, dtype=float) - self.mean_) / self.scale_

    def inverse_transform(self, Z):
        check_is_fitted(self, "mean_")
        return np.asarray(Z, dtype=float) * self.scale_ + self.mean_


class GpBank:
    """One independent SOGP per joint, fed the same ``3n``-dimensional input.

    Attributes
    ----------
    models : list of SparseOnlineGPRegressor
    normalizer : TargetNormalizer
    n_calls : int
        Number of :meth:`observe`-style calls seen so far (stride counter).
    """

    def __init__(self, config):
        self.config = config
        n = config.n_joints
        self.models = [config.make_model().initialize(3 * n) for _ in range(n)]
        self.normalizer = TargetNormalizer()
        self.n_calls = 0

    @property
    def n_joints(self):
        return len(self.models)

    @property
    def is_normalized(self):
        return hasattr(self.normalizer, "mean_")

    def fit_normalizer(self, warmup_targets):
        self.normalizer.fit(np.asarray(warmup_targets, dtype=float))
        return self

    def predict(self, x):
        """Denormalized mean torque per joint at GP input ``x`` (zeros before normalizing)."""
        if not self.is_normalized:
            return np.zeros(self.n_joints)
        z = np.array([m.predict_mean_fast(x) for m in self.models])
        return self.normalizer.inverse_transform(z)


def ramp(cfg, t):
    """Feedforward blend factor: 0 during warmup, then linear up to 1."""
    if t < cfg.warmup_duration:
        return 0.0
    if cfg.ramp_duration == 0:
        return 1.0
    return min(max((t - cfg.warmup_duration) / cfg.ramp_duration, 0.0), 1.0)


def compute_torque(cfg, bank, q_d, qd_d, qdd_d, q_hat, v_hat, t, return_prediction=False):
    """Control torque ``tau = tau_ff + tau_fb``.

    The feedforward term is the bank's prediction at the desired state,
    scaled by :func:`ramp`; the feedback term is ``Kp e + Kd edot`` on the
    estimated state. With ``return_prediction`` the unscaled prediction is
    appended to the returned tuple.
    """
    n = cfg.n_joints
    q_d = as_vector(q_d, n, "q_d")
    qd_d = as_vector(qd_d, n, "qd_d")
    qdd_d = as_vector(qdd_d, n, "qdd_d")
    q_hat = as_vector(q_hat, n, "q_hat")
    v_hat = as_vector(v_hat, n, "v_hat")
    if bank.n_joints != n:
        raise ValueError(f"bank has {bank.n_joints} joints, config has {n}")

    tau_fb = cfg.kp * (q_d - q_hat) + cfg.kd * (qd_d - v_hat)
    prediction = bank.predict(np.concatenate([q_d, qd_d, qdd_d]))
    tau_ff = ramp(cfg, t) * prediction
    tau = tau_ff + tau_fb
    if return_prediction:
        return tau, tau_ff, tau_fb, prediction
    return tau, tau_ff, tau_fb


def observe(cfg, bank, q_hat, v_hat, a_hat, tau_applied):
    """Count one sample; every ``update_stride``-th sample update each joint's GP.

    Returns the list of per-joint :class:`~sogpfm.sogp.UpdateReport`, or
    ``None`` when the sample was skipped.
    """
    n = bank.n_joints
    x = np.concatenate([as_vector(q_hat, n, "q_hat"), as_vector(v_hat, n, "v_hat"),
                        as_vector(a_hat, n, "a_hat")])
    tau_applied = as_vector(tau_applied, n, "tau_applied")
    bank.n_calls += 1
    if bank.n_calls % cfg.update_stride:
        return None
    if not bank.is_normalized:
        raise ValueError("fit the target normalizer before observing training data")
    targets = bank.normalizer.transform(tau_applied)
    return [model._update(x, float(y)) for model, y in zip(bank.models, targets)]


def save_bank(bank, directory):
    """Write one ``joint<i>.sogp`` snapshot per model plus ``normalizer.txt``."""
    os.makedirs(directory, exist_ok=True)
    for i, model in enumerate(bank.models):
        model.save(os.path.join(directory, f"joint{i + 1}.sogp"))
    if bank.is_normalized:
        with open(os.path.join(directory, "normalizer.txt"), "w") as fh:
            fh.write(" ".join("%.17g" % v for v in bank.normalizer.mean_) + "\n")
            fh.write(" ".join("%.17g" % v for v in bank.normalizer.scale_) + "\n")


def load_bank(config, directory):
    """Inverse of :func:`save_bank`; the models keep their stored hyperparameters."""
    bank = GpBank(config)
    models = []
    for i in range(config.n_joints):
        models.append(SparseOnlineGPRegressor.load(os.path.join(directory, f"joint{i + 1}.sogp")))
    if any(m.n_features_in_ != 3 * config.n_joints for m in models):
        raise ValueError(f"snapshots in {directory!r} do not match a {config.n_joints}-joint bank")
    bank.models = models
    norm_path = os.path.join(directory, "normalizer.txt")
    if os.path.exists(norm_path):
        with open(norm_path) as fh:
            mean, scale = (np.array([float(v) for v in line.split()]) for line in fh.read().splitlines()[:2])
        bank.normalizer.mean_ = mean
        bank.normalizer.scale_ = scale
        bank.normalizer.n_features_in_ = mean.shape[0]
    return bank
