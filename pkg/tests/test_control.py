import numpy as np
import pytest

from sogpfm.control import (ControllerConfig, GpBank, TargetNormalizer, compute_torque, load_bank, observe,
                            ramp, save_bank)


def fitted_bank(cfg=None, mean=(0.0, 0.0), scale=(1.0, 1.0)):
    bank = GpBank(cfg or ControllerConfig())
    bank.normalizer.mean_ = np.array(mean)
    bank.normalizer.scale_ = np.array(scale)
    return bank


def test_untrained_bank_with_zero_mean_gives_zero_torque():
    cfg = ControllerConfig()
    q = np.array([0.2, -0.1])
    tau, ff, fb = compute_torque(cfg, fitted_bank(cfg), q, [0, 0], [0, 0], q, [0, 0], t=10.0)
    assert tau.tolist() == [0.0, 0.0] and ff.tolist() == [0.0, 0.0] and fb.tolist() == [0.0, 0.0]


def test_untrained_bank_reproduces_normalizer_mean():
    cfg = ControllerConfig()
    tau, ff, _ = compute_torque(cfg, fitted_bank(cfg, mean=(1.5, -2.0)), [0, 0], [0, 0], [0, 0],
                                [0, 0], [0, 0], t=10.0)
    np.testing.assert_allclose(ff, [1.5, -2.0])


def test_feedback_term():
    cfg = ControllerConfig(kp=(400.0, 400.0))
    _, _, fb = compute_torque(cfg, GpBank(cfg), [0.1, 0.0], [0, 0], [0, 0], [0, 0], [0, 0], t=0.0)
    np.testing.assert_allclose(fb, [40.0, 0.0])


def test_ramp_shape():
    cfg = ControllerConfig(warmup_duration=2.0, ramp_duration=0.6)
    assert ramp(cfg, 1.99) == 0.0
    assert ramp(cfg, 2.3) == pytest.approx(0.5)
    assert ramp(cfg, 2.6) == 1.0 and ramp(cfg, 50.0) == 1.0
    ts = np.linspace(0, 5, 501)
    assert np.all(np.diff([ramp(cfg, t) for t in ts]) >= 0)
    assert ramp(ControllerConfig(ramp_duration=0.0), 2.0) == 1.0


def test_feedforward_scaled_half_way_through_ramp():
    cfg = ControllerConfig()
    bank = fitted_bank(cfg, mean=(2.0, 4.0))
    tau, ff, fb = compute_torque(cfg, bank, [0, 0], [0, 0], [0, 0], [0, 0], [0, 0], t=2.3)
    np.testing.assert_allclose(ff, [1.0, 2.0])
    np.testing.assert_array_equal(tau, ff + fb)


def test_dimension_mismatch():
    cfg = ControllerConfig()
    with pytest.raises(ValueError):
        compute_torque(cfg, GpBank(cfg), [0, 0, 0], [0, 0], [0, 0], [0, 0], [0, 0], t=0.0)


@pytest.mark.parametrize("stride,calls", [(7, 50), (7, 6), (1, 13)])
def test_update_stride(stride, calls, rng):
    cfg = ControllerConfig(update_stride=stride)
    bank = fitted_bank(cfg)
    n_updates = sum(observe(cfg, bank, *rng.normal(size=(3, 2)), rng.normal(size=2)) is not None
                    for _ in range(calls))
    assert n_updates == calls // stride
    assert bank.models[0].n_added_ == calls // stride


def test_joints_get_same_inputs_different_targets(rng):
    cfg = ControllerConfig(update_stride=1)
    bank = fitted_bank(cfg)
    for _ in range(5):
        observe(cfg, bank, *rng.normal(size=(3, 2)), rng.normal(size=2))
    a, b = bank.models
    np.testing.assert_array_equal(a.basis_vectors_, b.basis_vectors_)
    assert not np.array_equal(a.alpha_, b.alpha_)


def test_joint_models_share_no_state(rng):
    cfg = ControllerConfig(update_stride=1)
    data = [(rng.normal(size=6), rng.normal(size=2)) for _ in range(60)]
    bank = fitted_bank(cfg)
    for x, y in data:
        observe(cfg, bank, x[:2], x[2:4], x[4:], y)
    solo = cfg.make_model().initialize(6)
    for x, y in data:
        solo.update(x, y[1])
    np.testing.assert_array_equal(solo.alpha_, bank.models[1].alpha_)


def test_observe_requires_normalizer():
    cfg = ControllerConfig(update_stride=1)
    with pytest.raises(ValueError):
        observe(cfg, GpBank(cfg), [0, 0], [0, 0], [0, 0], [1, 1])


def test_normalizer_two_values():
    norm = TargetNormalizer().fit([[1.0, 1.0]] * 5 + [[3.0, 3.0]] * 5)
    np.testing.assert_allclose(norm.mean_, [2.0, 2.0])
    np.testing.assert_allclose(norm.scale_, [1.0, 1.0])


def test_normalizer_constant_targets_and_round_trip(rng):
    norm = TargetNormalizer().fit(np.full((12, 2), 3.5))
    assert norm.scale_.tolist() == [1e-6, 1e-6]
    np.testing.assert_allclose(norm.inverse_transform([0.0, 0.0]), [3.5, 3.5])
    Y = rng.normal(2.0, 5.0, (40, 2))
    norm = TargetNormalizer().fit(Y)
    np.testing.assert_allclose(norm.inverse_transform(norm.transform(Y)), Y, atol=1e-12)
    Z = TargetNormalizer().fit((Y - Y.mean(0)) / Y.std(0))
    np.testing.assert_allclose(Z.mean_, 0, atol=1e-12)
    np.testing.assert_allclose(Z.scale_, 1, atol=1e-12)


def test_normalizer_needs_ten_samples():
    with pytest.raises(ValueError):
        TargetNormalizer().fit(np.zeros((9, 2)))


def test_bad_gains():
    with pytest.raises(ValueError):
        ControllerConfig(kp=(1.0,), kd=(1.0, 1.0))
    with pytest.raises(ValueError):
        ControllerConfig(kp=(0.0, 1.0))


def test_bank_persistence(tmp_path, rng):
    cfg = ControllerConfig(update_stride=1)
    bank = fitted_bank(cfg, mean=(0.5, -0.5), scale=(2.0, 3.0))
    for _ in range(80):
        observe(cfg, bank, *rng.normal(size=(3, 2)), rng.normal(size=2))
    save_bank(bank, tmp_path)
    again = load_bank(cfg, tmp_path)
    x = rng.normal(size=6)
    np.testing.assert_allclose(again.predict(x), bank.predict(x), atol=1e-12)
    with pytest.raises(ValueError):
        load_bank(ControllerConfig(kp=(1.0,) * 3, kd=(1.0,) * 3), tmp_path)
