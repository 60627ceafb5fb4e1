"""Error-state EKF fusing strapdown IMU propagation with SLAM pose fixes.

Error-state ordering: [dp, dv, dtheta, dba, dbg]. The attitude error is a
body-frame rotation vector, ``R_true = R_est @ exp(dtheta)``.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import euler_to_rot, exp_so3, log_so3, orthonormalize

log = logging.getLogger(__name__)

N_ERR = 15
P_, V_, TH_, BA_, BG_ = slice(0, 3), slice(3, 6), slice(6, 9), slice(9, 12), slice(12, 15)
_H = np.zeros((6, N_ERR))
_H[0:3, P_] = np.eye(3)
_H[3:6, TH_] = np.eye(3)


@dataclass(frozen=True)
class EkfConfig:
    # per-sample white-noise std of the IMU (matches ImuConfig)
    accel_noise: float = 0.05
    gyro_noise: float = 0.002
    accel_bias_walk: float = 1e-4    # m/s^2/sqrt(s)
    gyro_bias_walk: float = 1e-5     # rad/s/sqrt(s)
    pos_noise: float = 0.015
    angle_noise: float = math.radians(0.5)
    init_pos_sigma: float = 0.1
    init_vel_sigma: float = 0.1
    init_angle_sigma: float = math.radians(2.0)
    init_accel_bias_sigma: float = 0.02
    init_gyro_bias_sigma: float = 0.002
    gate_sigma: float = 5.0
    buffer_horizon: float = 0.5
    g: float = 9.81

    def __post_init__(self):
        for name in ("accel_noise", "gyro_noise", "accel_bias_walk", "gyro_bias_walk",
                     "pos_noise", "angle_noise", "init_pos_sigma", "init_vel_sigma",
                     "init_angle_sigma", "init_accel_bias_sigma", "init_gyro_bias_sigma"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def initial_covariance(self):
        d = np.concatenate([np.full(3, self.init_pos_sigma ** 2),
                            np.full(3, self.init_vel_sigma ** 2),
                            np.full(3, self.init_angle_sigma ** 2),
                            np.full(3, self.init_accel_bias_sigma ** 2),
                            np.full(3, self.init_gyro_bias_sigma ** 2)])
        return np.diag(d)


class _History:
    """Fixed-size ring of recent nominal states for delayed measurements."""

    def __init__(self, size):
        self.t = np.full(size, -np.inf)
        self.p = np.zeros((size, 3))
        self.v = np.zeros((size, 3))
        self.R = np.tile(np.eye(3), (size, 1, 1))
        self.i = 0

    def push(self, t, p, v, R):
        k = self.i % len(self.t)
        self.t[k] = t
        self.p[k] = p
        self.v[k] = v
        self.R[k] = R
        self.i += 1

    def nearest(self, t):
        k = int(np.argmin(np.abs(self.t - t)))
        return self.p[k], self.v[k], self.R[k]

    def shift(self, dp, dv, dR):
        self.p += dp
        self.v += dv
        self.R = self.R @ dR

    def copy(self):
        h = _History.__new__(_History)
        h.t, h.p, h.v, h.R, h.i = self.t.copy(), self.p.copy(), self.v.copy(), self.R.copy(), self.i
        return h


@dataclass
class EkfState:
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    ba: np.ndarray
    bg: np.ndarray
    P: np.ndarray
    t: float = 0.0
    outliers: int = 0
    last_innovation: np.ndarray = None
    last_nis: float = None
    history: _History = field(default=None, repr=False)

    @classmethod
    def initial(cls, cfg, p=None, v=None, R=None, t=0.0, history_size=128):
        ekf = cls(np.zeros(3) if p is None else np.asarray(p, float).copy(),
                  np.zeros(3) if v is None else np.asarray(v, float).copy(),
                  np.eye(3) if R is None else np.asarray(R, float).copy(),
                  np.zeros(3), np.zeros(3), cfg.initial_covariance(), t)
        ekf.history = _History(history_size)
        ekf.history.push(t, ekf.p, ekf.v, ekf.R)
        return ekf

    def copy(self):
        return EkfState(self.p.copy(), self.v.copy(), self.R.copy(), self.ba.copy(),
                        self.bg.copy(), self.P.copy(), self.t, self.outliers,
                        self.last_innovation, self.last_nis,
                        None if self.history is None else self.history.copy())


def _finite(*xs):
    return all(np.all(np.isfinite(x)) for x in xs)


def ekf_predict(ekf, imu, dt, cfg, inplace=False):
    """Strapdown propagation of the nominal state and error covariance."""
    if not 0.0 < dt <= 0.02:
        raise ValueError("dt must lie in (0, 0.02]")
    if not _finite(imu.accel, imu.gyro):
        raise ValueError("non-finite IMU sample")
    out = ekf if inplace else ekf.copy()
    out.p, out.v, out.R, out.P = _kernels.ekf_predict(
        out.p, out.v, out.R, out.ba, out.bg, out.P, np.asarray(imu.accel, float),
        np.asarray(imu.gyro, float), float(dt), (cfg.accel_noise * dt) ** 2,
        (cfg.gyro_noise * dt) ** 2, cfg.accel_bias_walk ** 2 * dt,
        cfg.gyro_bias_walk ** 2 * dt, float(cfg.g))
    out.t = ekf.t + dt
    if out.history is not None:
        out.history.push(out.t, out.p, out.v, out.R)
    return out


def ekf_update_pose(ekf, slam, cfg, inplace=False):
    """Position + attitude update with innovation gating.

    The residual is formed against the stored nominal state nearest the
    measurement time and the correction is applied to the current state.
    """
    if not slam.valid:
        return ekf
    out = ekf if inplace else ekf.copy()
    if out.history is not None and slam.t < out.t - 1e-12:
        p_ref, _, R_ref = out.history.nearest(slam.t)
    else:
        p_ref, R_ref = out.p, out.R
    R_meas = slam.R if slam.R is not None else _ypr_to_rot(slam.yaw_pitch_roll)
    r = np.concatenate([slam.p - p_ref, log_so3(R_ref.T @ R_meas)])
    Rn = np.diag(np.concatenate([np.full(3, cfg.pos_noise ** 2), np.full(3, cfg.angle_noise ** 2)]))
    P = out.P
    PHt = P[:, _H.any(axis=0)]  # columns of P for the measured error states
    S = _H @ PHt + Rn
    S_inv = np.linalg.inv(S)
    nis = float(r @ S_inv @ r)
    out.last_innovation = r
    out.last_nis = nis
    if nis > cfg.gate_sigma ** 2:
        out.outliers += 1
        log.info("pose update rejected at t=%.3f (NIS %.1f)", slam.t, nis)
        return out
    K = PHt @ S_inv
    dx = K @ r
    IKH = np.eye(N_ERR) - K @ _H
    P = IKH @ P @ IKH.T + K @ Rn @ K.T
    out.P = 0.5 * (P + P.T)
    dR = exp_so3(dx[TH_])
    out.p = out.p + dx[P_]
    out.v = out.v + dx[V_]
    out.R = orthonormalize(out.R @ dR)
    out.ba = out.ba + dx[BA_]
    out.bg = out.bg + dx[BG_]
    if out.history is not None:
        out.history.shift(dx[P_], dx[V_], dR)
    return out


def _ypr_to_rot(ypr):
    yaw, pitch, roll = ypr
    return euler_to_rot(roll, pitch, yaw)


def error_state(ekf, p_true, v_true, R_true):
    """9-dim error [dp, dv, dtheta] of the estimate against truth."""
    return np.concatenate([p_true - ekf.p, v_true - ekf.v, log_so3(ekf.R.T @ R_true)])


def nees(ekf, p_true, v_true, R_true):
    e = error_state(ekf, p_true, v_true, R_true)
    return float(e @ np.linalg.solve(ekf.P[:9, :9], e))
