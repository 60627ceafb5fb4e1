import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aerograsp.estimation import (EkfConfig, EkfState, ekf_predict, ekf_update_pose, error_state,
                                  nees)
from aerograsp.geometry import E3, exp_so3, skew
from aerograsp.sensors import ImuSample, SlamPoseSample

CFG = EkfConfig()
HOVER = ImuSample(np.array([0, 0, 9.81]), np.zeros(3), 0.0)


def reference_predict(ekf, imu, dt, cfg):
    """Plain numpy strapdown + covariance step used as an oracle."""
    f, w, R = imu.accel - ekf.ba, imu.gyro - ekf.bg, ekf.R
    a = R @ f - cfg.g * E3
    dR = exp_so3(w * dt)
    F = np.eye(15)
    F[0:3, 3:6] = np.eye(3) * dt
    F[3:6, 6:9] = -R @ skew(f) * dt
    F[3:6, 9:12] = -R * dt
    F[6:9, 6:9] = dR.T
    F[6:9, 12:15] = -np.eye(3) * dt
    Q = np.diag(np.concatenate([np.zeros(3), np.full(3, (cfg.accel_noise * dt) ** 2),
                                np.full(3, (cfg.gyro_noise * dt) ** 2),
                                np.full(3, cfg.accel_bias_walk ** 2 * dt),
                                np.full(3, cfg.gyro_bias_walk ** 2 * dt)]))
    return (ekf.p + ekf.v * dt + 0.5 * a * dt * dt, ekf.v + a * dt, R @ dR,
            F @ ekf.P @ F.T + Q)


def test_predict_matches_reference():
    ekf = EkfState.initial(CFG, [0.1, 0.2, 1.0], [0.3, -0.1, 0.0], exp_so3([0.05, -0.02, 0.4]))
    ekf.ba = np.array([0.01, -0.02, 0.005])
    ekf.bg = np.array([0.001, 0.0, -0.002])
    imu = ImuSample(np.array([0.4, -0.3, 9.9]), np.array([0.1, -0.2, 0.05]), 0.0)
    out = ekf_predict(ekf, imu, 0.005, CFG)
    p, v, R, P = reference_predict(ekf, imu, 0.005, CFG)
    assert np.allclose(out.p, p, atol=1e-14) and np.allclose(out.v, v, atol=1e-14)
    assert np.allclose(out.R, R, atol=1e-14) and np.allclose(out.P, P, atol=1e-16)


def test_predict_hover_equilibrium():
    ekf = EkfState.initial(CFG, [0, 0, 1.0])
    out = ekf
    for _ in range(200):
        out = ekf_predict(out, HOVER, 0.005, CFG)
    assert np.linalg.norm(out.p - ekf.p) < 200 * 1e-12
    assert np.linalg.norm(out.v) < 200 * 1e-12


def test_predict_free_fall_and_covariance_growth():
    ekf = EkfState.initial(CFG)
    out = ekf_predict(ekf, ImuSample(np.zeros(3), np.zeros(3), 0.0), 0.01, CFG)
    assert out.v[2] == pytest.approx(-9.81 * 0.01)
    assert np.trace(out.P) > np.trace(ekf.P)
    with pytest.raises(ValueError):
        ekf_predict(ekf, HOVER, 0.05, CFG)
    with pytest.raises(ValueError):
        ekf_predict(ekf, ImuSample(np.array([np.inf, 0, 0]), np.zeros(3), 0), 0.005, CFG)


def _slam(p, R=np.eye(3), t=0.0, valid=True):
    return SlamPoseSample(np.asarray(p, float), (0.0, 0.0, 0.0), t, valid, R)


def test_update_zero_innovation():
    ekf = EkfState.initial(CFG, [0, 0, 1.0])
    out = ekf_update_pose(ekf, _slam([0, 0, 1.0]), CFG)
    assert np.allclose(out.p, ekf.p) and np.allclose(out.R, ekf.R)
    assert np.trace(out.P) < np.trace(ekf.P)
    assert np.max(np.abs(out.P - out.P.T)) < 1e-10


def test_update_gates_outlier():
    ekf = EkfState.initial(CFG, [0, 0, 1.0])
    for _ in range(20):
        ekf = ekf_update_pose(ekf, _slam([0, 0, 1.0]), CFG)
    out = ekf_update_pose(ekf, _slam([1.0, 0, 1.0]), CFG)
    assert out.outliers == ekf.outliers + 1
    assert np.array_equal(out.p, ekf.p) and np.array_equal(out.P, ekf.P)


def test_invalid_sample_is_noop():
    ekf = EkfState.initial(CFG)
    assert ekf_update_pose(ekf, _slam([1, 1, 1], valid=False), CFG) is ekf


def test_noiseless_convergence():
    # filter tuned for a noiseless pose sensor
    cfg = EkfConfig(pos_noise=1e-4, angle_noise=1e-4)
    truth = np.array([0, 0, 1.0])
    ekf = EkfState.initial(cfg, truth + [0.1, 0, 0])
    for _ in range(100):
        for _ in range(3):
            ekf = ekf_predict(ekf, HOVER, 0.005, cfg, inplace=True)
        ekf = ekf_update_pose(ekf, _slam(truth, t=ekf.t), cfg, inplace=True)
    assert np.linalg.norm(ekf.p - truth) < 1e-6


def test_delayed_measurement_uses_history():
    ekf = EkfState.initial(CFG, [0, 0, 1.0], v=[1.0, 0, 0])
    for _ in range(10):
        ekf = ekf_predict(ekf, HOVER, 0.005, CFG, inplace=True)
    # a pose fix consistent with where the filter was 20 ms ago has small innovation
    out = ekf_update_pose(ekf, _slam([0.03, 0, 1.0], t=ekf.t - 0.02), CFG)
    assert abs(out.last_innovation[0]) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_covariance_stays_symmetric_psd(seed):
    rng = np.random.default_rng(seed)
    ekf = EkfState.initial(CFG, [0, 0, 1.0])
    for k in range(60):
        imu = ImuSample(np.array([0, 0, 9.81]) + rng.normal(0, 0.5, 3), rng.normal(0, 0.1, 3), 0)
        ekf = ekf_predict(ekf, imu, 0.005, CFG, inplace=True)
        if k % 3 == 0:
            tr = np.trace(ekf.P)
            ekf = ekf_update_pose(ekf, _slam(ekf.p + rng.normal(0, 0.01, 3),
                                             ekf.R @ exp_so3(rng.normal(0, 0.005, 3)), ekf.t),
                                  CFG, inplace=True)
            assert np.trace(ekf.P) <= tr + 1e-15
        assert np.max(np.abs(ekf.P - ekf.P.T)) < 1e-10
        assert np.min(np.linalg.eigvalsh(ekf.P)) > -1e-12
        assert np.allclose(ekf.R.T @ ekf.R, np.eye(3), atol=1e-9)


def test_nees_of_exact_estimate_is_zero():
    ekf = EkfState.initial(CFG, [1, 2, 3])
    assert nees(ekf, ekf.p, ekf.v, ekf.R) == 0.0
    e = error_state(ekf, ekf.p + [0.1, 0, 0], ekf.v, ekf.R)
    assert e[0] == pytest.approx(0.1)
    assert nees(ekf, ekf.p + [0.1, 0, 0], ekf.v, ekf.R) == pytest.approx(1.0)


def test_config_requires_positive_noise():
    with pytest.raises(ValueError):
        EkfConfig(pos_noise=0.0)
    assert math.isclose(CFG.angle_noise, math.radians(0.5))
