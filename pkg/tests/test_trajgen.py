import math

import numpy as np
import pytest

from sogpfm.trajgen import CircleSegment, QuinticSegment, Schedule, default_two_task_schedule, quintic_fit


def test_unit_quintic_coefficients():
    seg = quintic_fit([0.0], [1.0], 1.0)
    np.testing.assert_allclose(seg.coeffs[0], [0, 0, 0, 10, -15, 6], atol=1e-12)


def test_matches_linear_solve(rng):
    for _ in range(20):
        T = rng.uniform(0.3, 3)
        p0, p1, v0, v1, a0, a1 = rng.normal(size=6)
        A = np.array([
            [1, 0, 0, 0, 0, 0],
            [0, 1, 0, 0, 0, 0],
            [0, 0, 2, 0, 0, 0],
            [1, T, T**2, T**3, T**4, T**5],
            [0, 1, 2 * T, 3 * T**2, 4 * T**3, 5 * T**4],
            [0, 0, 2, 6 * T, 12 * T**2, 20 * T**3],
        ])
        expected = np.linalg.solve(A, [p0, v0, a0, p1, v1, a1])
        seg = quintic_fit([p0], [p1], T, [v0], [v1], [a0], [a1])
        np.testing.assert_allclose(seg.coeffs[0], expected, rtol=1e-9, atol=1e-9)


def test_boundary_conditions_and_midpoint(rng):
    p0, p1 = rng.normal(size=3), rng.normal(size=3)
    seg = quintic_fit(p0, p1, 1.7)
    pos0, vel0, acc0 = seg.eval(0.0)
    pos1, vel1, acc1 = seg.eval(1.7)
    np.testing.assert_allclose(pos0, p0, atol=1e-12)
    np.testing.assert_allclose(pos1, p1, atol=1e-12)
    for v in (vel0, vel1, acc0, acc1):
        assert np.abs(v).max() <= 1e-12
    np.testing.assert_allclose(seg.eval(0.85)[0], (p0 + p1) / 2, atol=1e-12)


def test_nonpositive_duration():
    with pytest.raises(ValueError):
        quintic_fit([0.0], [1.0], 0.0)


def test_circle_acceleration_magnitude(rng):
    c = CircleSegment((0.0, 0.5), 0.5, 2 * math.pi / 4, 10.0)
    for t in rng.uniform(0, 10, 50):
        assert np.linalg.norm(c.eval(t)[2]) == pytest.approx(0.5 * (math.pi / 2) ** 2, rel=1e-12)


def test_default_schedule_shape():
    s = default_two_task_schedule()
    assert s.total_duration == pytest.approx(60.0)
    first_task2 = s.labels.index("task2")
    assert s.starts[first_task2] == pytest.approx(40.0)
    pos, vel, acc = s.eval(0.0)
    np.testing.assert_allclose(pos, [0.8, 0.6])
    assert not vel.any() and not acc.any()


def test_schedule_continuity():
    s = default_two_task_schedule()
    for i, start in enumerate(s.starts[1:], 1):
        prev = s.segments[i - 1].eval(s.segments[i - 1].duration)
        nxt = s.segments[i].eval(0.0)
        for a, b in zip(prev, nxt):
            np.testing.assert_allclose(a, b, atol=1e-10)


def test_central_differences_match(rng):
    s = default_two_task_schedule()
    h = 1e-5
    for t in rng.uniform(h, 60 - h, 100):
        qm, vm, _ = s.eval(t - h)
        qp, vp, _ = s.eval(t + h)
        _, v, a = s.eval(t)
        np.testing.assert_allclose((qp - qm) / (2 * h), v, atol=1e-6)
        np.testing.assert_allclose((vp - vm) / (2 * h), a, atol=1e-4)


def test_reference_is_bounded():
    s = default_two_task_schedule()
    vals = np.array([np.concatenate(s.eval(t)) for t in np.linspace(0, 60, 6001)])
    assert np.isfinite(vals).all() and np.abs(vals).max() < 20


def test_out_of_range_and_bad_layout():
    s = default_two_task_schedule()
    with pytest.raises(ValueError):
        s.eval(-0.1)
    with pytest.raises(ValueError):
        s.eval(60.5)
    with pytest.raises(ValueError):
        default_two_task_schedule(segment_duration=3.0)
    with pytest.raises(ValueError):
        Schedule([])


def test_scale_shrinks_everything():
    a, b = default_two_task_schedule(), default_two_task_schedule(scale=0.5)
    for t in (0.0, 13.3, 45.0):
        np.testing.assert_allclose(b.eval(t)[0], 0.5 * a.eval(t)[0], atol=1e-12)


def test_quintic_segment_is_a_dataclass():
    seg = QuinticSegment(np.zeros((1, 6)), 1.0)
    assert seg.eval(0.5)[0].tolist() == [0.0]
