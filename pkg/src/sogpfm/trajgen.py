"""Joint-space reference trajectories: quintic segments, circles and schedules."""

from dataclasses import dataclass
import bisect
import math

import numpy as np

from .validation import as_vector, check_positive


@dataclass(frozen=True)
class QuinticSegment:
    """Per-joint quintic ``p(tau) = sum_k coeffs[:, k] * tau**k`` on ``[0, duration]``."""

    coeffs: np.ndarray
    duration: float

    def eval(self, tau):
        c = self.coeffs
        t2 = tau * tau
        t3 = t2 * tau
        t4 = t3 * tau
        t5 = t4 * tau
        pos = c[:, 0] + c[:, 1] * tau + c[:, 2] * t2 + c[:, 3] * t3 + c[:, 4] * t4 + c[:, 5] * t5
        vel = c[:, 1] + 2 * c[:, 2] * tau + 3 * c[:, 3] * t2 + 4 * c[:, 4] * t3 + 5 * c[:, 5] * t4
        acc = 2 * c[:, 2] + 6 * c[:, 3] * tau + 12 * c[:, 4] * t2 + 20 * c[:, 5] * t3
        return pos, vel, acc


def quintic_fit(p0, p1, duration, v0=None, v1=None, a0=None, a1=None):
    """Quintic through ``p0 -> p1`` with the given end velocities and accelerations.

    Unspecified boundary derivatives are zero (rest-to-rest motion).
    """
    if not duration > 0:
        raise ValueError(f"segment duration must be > 0, got {duration!r}")
    p0 = as_vector(p0, name="p0")
    n = p0.shape[0]
    p1 = as_vector(p1, n, "p1")
    zero = np.zeros(n)
    v0 = zero if v0 is None else as_vector(v0, n, "v0")
    v1 = zero if v1 is None else as_vector(v1, n, "v1")
    a0 = zero if a0 is None else as_vector(a0, n, "a0")
    a1 = zero if a1 is None else as_vector(a1, n, "a1")
    T = float(duration)
    T2, T3, T4, T5 = T**2, T**3, T**4, T**5
    # closed-form solution of the 6x6 boundary-value system
    dp = p1 - p0
    c3 = (20 * dp - (8 * v1 + 12 * v0) * T - (3 * a0 - a1) * T2) / (2 * T3)
    c4 = (-30 * dp + (14 * v1 + 16 * v0) * T + (3 * a0 - 2 * a1) * T2) / (2 * T4)
    c5 = (12 * dp - 6 * (v1 + v0) * T - (a0 - a1) * T2) / (2 * T5)
    coeffs = np.column_stack([p0, v0, a0 / 2, c3, c4, c5])
    return QuinticSegment(coeffs, T)


@dataclass(frozen=True)
class CircleSegment:
    """``q(tau) = center + radius * (cos(w tau + phase), sin(w tau + phase))``."""

    center: tuple
    radius: float
    omega: float
    duration: float
    phase: float = 0.0

    def __post_init__(self):
        check_positive(self.radius, "radius")
        check_positive(self.duration, "duration")
        if self.omega == 0 or not math.isfinite(self.omega):
            raise ValueError(f"omega must be finite and nonzero, got {self.omega!r}")
        if len(self.center) != 2:
            raise ValueError("circle center must be a 2-vector")

    def eval(self, tau):
        th = self.omega * tau + self.phase
        c, s = math.cos(th), math.sin(th)
        r, w = self.radius, self.omega
        pos = np.array([self.center[0] + r * c, self.center[1] + r * s])
        vel = np.array([-r * w * s, r * w * c])
        acc = np.array([-r * w * w * c, -r * w * w * s])
        return pos, vel, acc


class Schedule:
    """Contiguous sequence of segments starting at t = 0.

    Parameters
    ----------
    segments : list of QuinticSegment or CircleSegment
    labels : list of str, optional
        Free-form tag per segment (e.g. which task it belongs to).
    """

    def __init__(self, segments, labels=None):
        if not segments:
            raise ValueError("a schedule needs at least one segment")
        self.segments = list(segments)
        self.labels = list(labels) if labels is not None else [""] * len(self.segments)
        self.starts = []
        t = 0.0
        for seg in self.segments:
            self.starts.append(t)
            t += seg.duration
        self.total_duration = t

    def eval(self, t):
        """Reference ``(q_d, qd_d, qdd_d)`` at absolute time ``t``."""
        if not 0.0 <= t <= self.total_duration + 1e-9:
            raise ValueError(f"t={t!r} outside schedule [0, {self.total_duration}]")
        i = max(bisect.bisect_right(self.starts, t) - 1, 0)
        seg = self.segments[i]
        return seg.eval(min(t - self.starts[i], seg.duration))

    def segment_at(self, t):
        return max(bisect.bisect_right(self.starts, t) - 1, 0)


DEFAULT_WAYPOINTS = ((0.8, 0.6), (-0.2, 1.5), (0.3, -0.4), (1.0, 0.9))


def default_two_task_schedule(
    scale=1.0,
    waypoints=DEFAULT_WAYPOINTS,
    segment_duration=1.25,
    task1_duration=40.0,
    bridge_duration=1.0,
    circle_center=(0.0, 0.5),
    circle_radius=0.5,
    circle_period=4.0,
    total_duration=60.0,
):
    """Slow point-to-point cycle followed by a fast circle.

    Task 1 cycles through ``waypoints`` with rest-to-rest quintics of equal
    duration until ``task1_duration``; Task 2 begins there with a quintic
    bridge that lands on the circle with matching velocity and acceleration,
    then follows the circle until ``total_duration``. ``scale`` multiplies
    waypoint and circle-center offsets as well as the radius.
    """
    check_positive(scale, "scale")
    wps = [np.asarray(w, dtype=float) * scale for w in waypoints]
    if len(wps) < 2:
        raise ValueError("need at least two waypoints")
    n_seg = int(round(task1_duration / segment_duration))
    if n_seg < 1 or abs(n_seg * segment_duration - task1_duration) > 1e-9:
        raise ValueError("task1_duration must be a multiple of segment_duration")

    segments, labels = [], []
    for k in range(n_seg):
        segments.append(quintic_fit(wps[k % len(wps)], wps[(k + 1) % len(wps)], segment_duration))
        labels.append("task1")
    end = wps[n_seg % len(wps)]

    circle = CircleSegment(
        center=tuple(np.asarray(circle_center, dtype=float) * scale),
        radius=circle_radius * scale,
        omega=2 * math.pi / circle_period,
        duration=total_duration - task1_duration - bridge_duration,
    )
    c_pos, c_vel, c_acc = circle.eval(0.0)
    segments.append(quintic_fit(end, c_pos, bridge_duration, v1=c_vel, a1=c_acc))
    labels.append("task2")
    segments.append(circle)
    labels.append("task2")
    return Schedule(segments, labels)
