"""Two-link planar arm with gravity, viscous friction and noisy position sensing.

Angle convention: ``q = 0`` puts a link along +x, gravity acts along -y,
and ``q[1]`` is measured relative to link 1. The dynamics are

    M(q) qdd + C(q, qd) qd + g(q) + friction * qd = tau

with uniform-rod links. Everything is written with scalar math because the
benchmark loop calls these functions tens of thousands of times.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .exceptions import SimulationDivergenceError
from .validation import check_positive


@dataclass(frozen=True)
class ArmParams:
    """Physical parameters; COM distances and inertias default to uniform rods."""

    m1: float = 1.0
    m2: float = 1.0
    l1: float = 0.5
    l2: float = 0.5
    lc1: float = None
    lc2: float = None
    I1: float = None
    I2: float = None
    g: float = 9.81
    friction: tuple = (0.1, 0.1)

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2"):
            check_positive(getattr(self, name), name)
        defaults = {
            "lc1": self.l1 / 2,
            "lc2": self.l2 / 2,
            "I1": self.m1 * self.l1**2 / 12,
            "I2": self.m2 * self.l2**2 / 12,
        }
        for name, value in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, value)
            check_positive(getattr(self, name), name)
        check_positive(self.g, "g", strict=False)
        fr = tuple(float(f) for f in np.broadcast_to(np.asarray(self.friction, dtype=float), (2,)))
        if any(f < 0 for f in fr):
            raise ValueError(f"friction must be >= 0, got {fr}")
        object.__setattr__(self, "friction", fr)


@dataclass
class ArmState:
    q: np.ndarray
    qd: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).copy()
        self.qd = np.asarray(self.qd, dtype=float).copy()


def mass_matrix(p, q):
    c2 = math.cos(q[1])
    a = p.m2 * p.l1 * p.lc2
    m22 = p.m2 * p.lc2**2 + p.I2
    m12 = m22 + a * c2
    m11 = p.m1 * p.lc1**2 + p.I1 + p.m2 * (p.l1**2 + p.lc2**2) + p.I2 + 2 * a * c2
    return np.array([[m11, m12], [m12, m22]])


def coriolis_matrix(p, q, qd):
    """Centripetal/Coriolis matrix such that ``Mdot - 2C`` is skew-symmetric."""
    h = -p.m2 * p.l1 * p.lc2 * math.sin(q[1])
    return np.array([[h * qd[1], h * (qd[0] + qd[1])], [-h * qd[0], 0.0]])


def gravity_torque(p, q):
    c1 = math.cos(q[0])
    c12 = math.cos(q[0] + q[1])
    g2 = p.m2 * p.lc2 * p.g * c12
    return np.array([(p.m1 * p.lc1 + p.m2 * p.l1) * p.g * c1 + g2, g2])


def friction_torque(p, qd):
    return np.array([p.friction[0] * qd[0], p.friction[1] * qd[1]])


def _rhs(p, q0, q1, v0, v1, tau0, tau1):
    # closed-form M^{-1}(tau - C qd - g - friction * qd) for a 2x2 system
    c2 = math.cos(q1)
    s2 = math.sin(q1)
    a = p.m2 * p.l1 * p.lc2
    m22 = p.m2 * p.lc2**2 + p.I2
    m12 = m22 + a * c2
    m11 = p.m1 * p.lc1**2 + p.I1 + p.m2 * (p.l1**2 + p.lc2**2) + p.I2 + 2 * a * c2
    h = -a * s2
    c12 = math.cos(q0 + q1)
    g2 = p.m2 * p.lc2 * p.g * c12
    g1 = (p.m1 * p.lc1 + p.m2 * p.l1) * p.g * math.cos(q0) + g2
    b0 = tau0 - (h * v1 * v0 + h * (v0 + v1) * v1) - g1 - p.friction[0] * v0
    b1 = tau1 - (-h * v0 * v0) - g2 - p.friction[1] * v1
    det = m11 * m22 - m12 * m12
    return (m22 * b0 - m12 * b1) / det, (m11 * b1 - m12 * b0) / det


def forward_dynamics(p, s, tau):
    """Joint accelerations produced by torque ``tau`` at state ``s``."""
    a0, a1 = _rhs(p, s.q[0], s.q[1], s.qd[0], s.qd[1], tau[0], tau[1])
    return np.array([a0, a1])


def inverse_dynamics(p, q, qd, qdd):
    """Torque needed to realise ``qdd`` at ``(q, qd)``."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    qdd = np.asarray(qdd, dtype=float)
    return (
        mass_matrix(p, q) @ qdd
        + coriolis_matrix(p, q, qd) @ qd
        + gravity_torque(p, q)
        + friction_torque(p, qd)
    )


def total_energy(p, s):
    """Kinetic plus potential energy (zero potential at y = 0)."""
    kinetic = 0.5 * s.qd @ mass_matrix(p, s.q) @ s.qd
    y1 = p.lc1 * math.sin(s.q[0])
    y2 = p.l1 * math.sin(s.q[0]) + p.lc2 * math.sin(s.q[0] + s.q[1])
    return float(kinetic + p.g * (p.m1 * y1 + p.m2 * y2))


def step(p, s, tau, dt):
    """Advance one fixed RK4 step with ``tau`` held constant over the step."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    t0, t1 = float(tau[0]), float(tau[1])
    q0, q1 = float(s.q[0]), float(s.q[1])
    v0, v1 = float(s.qd[0]), float(s.qd[1])
    h2 = 0.5 * dt

    try:
        out = _rk4(p, q0, q1, v0, v1, t0, t1, dt, h2)
    except (ValueError, OverflowError):  # math.cos(inf) and friends
        out = (math.nan,) * 4
    nq0, nq1, nv0, nv1 = out
    if not all(math.isfinite(v) for v in out):
        raise SimulationDivergenceError(
            f"non-finite arm state after step at t={s.t + dt:.6f}", t=s.t, state=s
        )
    return ArmState(np.array([nq0, nq1]), np.array([nv0, nv1]), s.t + dt)


def _rk4(p, q0, q1, v0, v1, t0, t1, dt, h2):
    a0, a1 = _rhs(p, q0, q1, v0, v1, t0, t1)
    b0, b1 = _rhs(p, q0 + h2 * v0, q1 + h2 * v1, v0 + h2 * a0, v1 + h2 * a1, t0, t1)
    c0, c1 = _rhs(
        p, q0 + h2 * (v0 + h2 * a0), q1 + h2 * (v1 + h2 * a1), v0 + h2 * b0, v1 + h2 * b1, t0, t1
    )
    d0, d1 = _rhs(
        p, q0 + dt * (v0 + h2 * b0), q1 + dt * (v1 + h2 * b1), v0 + dt * c0, v1 + dt * c1, t0, t1
    )
    # RK4 weights on (q, v): dq stages are v, v + h2*a, v + h2*b, v + dt*c
    nq0 = q0 + dt / 6 * (v0 + 2 * (v0 + h2 * a0) + 2 * (v0 + h2 * b0) + (v0 + dt * c0))
    nq1 = q1 + dt / 6 * (v1 + 2 * (v1 + h2 * a1) + 2 * (v1 + h2 * b1) + (v1 + dt * c1))
    nv0 = v0 + dt / 6 * (a0 + 2 * b0 + 2 * c0 + d0)
    nv1 = v1 + dt / 6 * (a1 + 2 * b1 + 2 * c1 + d1)
    return nq0, nq1, nv0, nv1


def measure(s, noise_var, rng):
    """Joint positions corrupted by zero-mean Gaussian noise of variance ``noise_var``."""
    if noise_var < 0:
        raise ValueError(f"noise_var must be >= 0, got {noise_var!r}")
    if noise_var == 0:
        return s.q.copy()
    return s.q + rng.normal(0.0, math.sqrt(noise_var), size=s.q.shape)


ESTIMATOR_MODES = ("exact", "finite_difference", "linear_eso")


@dataclass
class StateEstimator:
    """Recovers joint position, velocity and acceleration from position samples.

    Parameters
    ----------
    mode : {"exact", "finite_difference", "linear_eso"}
        ``exact`` passes simulator truth through and exists for testing.
        ``finite_difference`` uses causal differences smoothed by a first-order
        low-pass with cutoff ``bandwidth`` (rad/s). ``linear_eso`` runs a
        per-joint third-order observer with gains ``(3w, 3w^2, w^3)``,
        ``w = bandwidth``.
    bandwidth : float
    n_joints : int
    """

    mode: str = "linear_eso"
    bandwidth: float = 400.0
    n_joints: int = 2
    q_hat: np.ndarray = field(init=False, default=None)
    v_hat: np.ndarray = field(init=False, default=None)
    a_hat: np.ndarray = field(init=False, default=None)

    def __post_init__(self):
        if self.mode not in ESTIMATOR_MODES:
            raise ValueError(f"unknown estimator mode {self.mode!r}; expected one of {ESTIMATOR_MODES}")
        check_positive(self.bandwidth, "bandwidth")
        self.reset()

    def reset(self):
        self.q_hat = None
        self.v_hat = np.zeros(self.n_joints)
        self.a_hat = np.zeros(self.n_joints)
        self._q_prev = None
        self._v_raw_prev = None

    def update(self, q_meas, dt, truth=None):
        """Ingest one measurement; returns ``(q_hat, v_hat, a_hat)``.

        ``truth`` must be ``(q, qd, qdd)`` in ``exact`` mode and is ignored
        otherwise.
        """
        if not dt > 0:
            raise ValueError(f"dt must be > 0, got {dt!r}")
        q_meas = np.asarray(q_meas, dtype=float)
        if self.mode == "exact":
            if truth is None:
                raise ValueError("exact estimator mode needs the simulator truth")
            q, qd, qdd = truth
            self.q_hat, self.v_hat, self.a_hat = (np.array(q, dtype=float), np.array(qd, dtype=float),
                                                  np.array(qdd, dtype=float))
        elif self.q_hat is None:
            self.q_hat = q_meas.copy()
            self._q_prev = q_meas.copy()
            self._v_raw_prev = np.zeros(self.n_joints)
        elif self.mode == "linear_eso":
            # predict with the chain-of-integrators model, then correct with
            # the current sample (avoids a one-step lag in the innovation)
            w = self.bandwidth
            q_pred = self.q_hat + dt * self.v_hat
            v_pred = self.v_hat + dt * self.a_hat
            err = q_meas - q_pred
            self.q_hat = q_pred + dt * 3 * w * err
            self.v_hat = v_pred + dt * 3 * w * w * err
            self.a_hat = self.a_hat + dt * w**3 * err
        else:
            beta = dt * self.bandwidth / (1.0 + dt * self.bandwidth)
            v_raw = (q_meas - self._q_prev) / dt
            v_new = self.v_hat + beta * (v_raw - self.v_hat)
            a_raw = (v_new - self.v_hat) / dt
            self.a_hat = self.a_hat + beta * (a_raw - self.a_hat)
            self.v_hat = v_new
            self.q_hat = q_meas.copy()
            self._q_prev = q_meas.copy()
        return self.q_hat.copy(), self.v_hat.copy(), self.a_hat.copy()
