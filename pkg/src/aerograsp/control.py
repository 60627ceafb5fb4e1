"""Position/velocity outer loop and the two thrust laws.

The accelerometer-feedback law increments the previous thrust vector by a
PD term on the acceleration error, so no vehicle mass or gravity term is
needed; the direct-acceleration baseline inverts ``f = m a + m g``.
"""

import enum
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import MAX_ANGLE, ControlCommand
from .geometry import E3, rot_to_euler, rot_z

POSITION, VELOCITY = "position", "velocity"


class ControllerKind(str, enum.Enum):
    TMAF = "tmaf"
    DA = "da"


@dataclass(frozen=True)
class AxisModes:
    x: str = POSITION
    y: str = POSITION
    z: str = POSITION

    def __iter__(self):
        return iter((self.x, self.y, self.z))


ALL_POSITION = AxisModes()
SERVO_MODES = AxisModes(VELOCITY, POSITION, POSITION)


@dataclass(frozen=True)
class Setpoint:
    p_des: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v_des: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_des: float = 0.0

    def __post_init__(self):
        if not (np.all(np.isfinite(self.p_des)) and np.all(np.isfinite(self.v_des))
                and math.isfinite(self.yaw_des)):
            raise ValueError("setpoint must be finite")


@dataclass(frozen=True)
class OuterLoopGains:
    kp_pos: tuple = (1.6, 1.6, 2.5)
    kd_pos: tuple = (2.2, 2.2, 2.8)
    kp_vel: tuple = (2.0, 2.0, 2.5)
    a_max: float = 4.0

    def __post_init__(self):
        if min(self.kp_pos + self.kd_pos + self.kp_vel) <= 0 or self.a_max <= 0:
            raise ValueError("gains must be positive")


@dataclass(frozen=True)
class ThrustControllerState:
    alpha: np.ndarray
    beta: np.ndarray
    prev_e_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_f_star: np.ndarray = field(default_factory=lambda: np.zeros(3))
    e_dot_filt: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initialized: bool = False
    cutoff_hz: float = 20.0
    max_thrust: float = 100.0
    f0: float = 0.0

    @classmethod
    def create(cls, alpha, beta, **kw):
        return cls(np.broadcast_to(np.asarray(alpha, float), (3,)).copy(),
                   np.broadcast_to(np.asarray(beta, float), (3,)).copy(), **kw)


def desired_acceleration(p, v, sp, modes, gains):
    """Per-axis PD (position mode) or P (velocity mode) acceleration demand,
    clamped in norm to ``gains.a_max``."""
    a = np.zeros(3)
    for i, mode in enumerate(modes):
        if mode == POSITION:
            a[i] = gains.kp_pos[i] * (sp.p_des[i] - p[i]) - gains.kd_pos[i] * v[i]
        elif mode == VELOCITY:
            a[i] = gains.kp_vel[i] * (sp.v_des[i] - v[i])
        else:
            raise ValueError(f"unknown axis mode {mode!r}")
    n = float(np.linalg.norm(a))
    if n > gains.a_max:
        a *= gains.a_max / n
    return a


def tmaf_law(e_a, e_a_dot, prev_f_star, alpha, beta):
    """Thrust increment: alpha * e_a + beta * de_a/dt + previous thrust."""
    return alpha * e_a + beta * e_a_dot + prev_f_star


def tmaf_thrust(a_star, a_meas, ctrl, dt):
    """One step of the accelerometer-feedback thrust law.

    ``a_meas`` is the world-frame acceleration from the accelerometer. The
    error derivative is a finite difference smoothed by a first-order
    low-pass at ``ctrl.cutoff_hz``. The vertical thrust is kept within
    [0, max_thrust].
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not ctrl.initialized:
        ctrl = replace(ctrl, prev_e_a=np.zeros(3), e_dot_filt=np.zeros(3),
                       prev_f_star=np.array([0.0, 0.0, ctrl.f0]), initialized=True)
    e_a = np.asarray(a_star, float) - np.asarray(a_meas, float)
    raw = (e_a - ctrl.prev_e_a) / dt
    rc = 1.0 / (2.0 * math.pi * ctrl.cutoff_hz)
    k = dt / (dt + rc)
    e_dot = ctrl.e_dot_filt + k * (raw - ctrl.e_dot_filt)
    f_star = tmaf_law(e_a, e_dot, ctrl.prev_f_star, ctrl.alpha, ctrl.beta)
    f_star[2] = min(max(f_star[2], 0.0), ctrl.max_thrust)
    return f_star, replace(ctrl, prev_e_a=e_a, prev_f_star=f_star, e_dot_filt=e_dot)


def da_thrust(a_star, m, g=9.81, f_e_est=None):
    """Direct-acceleration baseline ``m a* + m g z - f_e``."""
    if m <= 0:
        raise ValueError("mass must be positive")
    f = m * np.asarray(a_star, float) + m * g * E3
    if f_e_est is not None:
        f = f - np.asarray(f_e_est, float)
    return f


@dataclass(frozen=True)
class AttitudeResult:
    command: ControlCommand
    R_des: np.ndarray
    degenerate: bool = False
    clamped: bool = False


def _cross(a, b):
    return np.array([a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def thrust_to_attitude(f_star, yaw_des, R_current, prev=None, max_thrust=np.inf):
    """Desired orientation whose body z axis follows the thrust vector.

    The scalar thrust is the projection of ``f_star`` on the current body z
    axis. A near-zero thrust vector or a thrust vector aligned with the yaw
    heading holds ``prev`` (or level attitude) and sets ``degenerate``.
    """
    f_star = np.asarray(f_star, float)
    norm = float(np.linalg.norm(f_star))
    thrust = min(max(float(f_star @ R_current[:, 2]), 0.0), max_thrust)
    heading = np.array([math.cos(yaw_des), math.sin(yaw_des), 0.0])
    b3 = f_star / norm if norm > 0.1 else None
    b2 = _cross(b3, heading) if b3 is not None else None
    if b3 is None or np.linalg.norm(b2) < 1e-6:
        if prev is not None:
            cmd = replace(prev.command, thrust=thrust)
            return AttitudeResult(cmd, prev.R_des, True, prev.clamped)
        return AttitudeResult(ControlCommand(thrust, 0.0, 0.0, yaw_des), rot_z(yaw_des), True)
    b2 /= np.linalg.norm(b2)
    b1 = _cross(b2, b3)
    R_des = np.column_stack([b1, b2, b3])
    roll, pitch, yaw = rot_to_euler(R_des)
    clamped = abs(roll) > MAX_ANGLE or abs(pitch) > MAX_ANGLE
    roll = min(max(roll, -MAX_ANGLE), MAX_ANGLE)
    pitch = min(max(pitch, -MAX_ANGLE), MAX_ANGLE)
    return AttitudeResult(ControlCommand(thrust, roll, pitch, yaw), R_des, False, clamped)


@dataclass(frozen=True)
class ControlConfig:
    kind: ControllerKind = ControllerKind.TMAF
    alpha: tuple = (0.3, 0.3, 1.0)
    beta: tuple = (0.05, 0.05, 0.02)
    cutoff_hz: float = 20.0
    assumed_mass: float = 3.4
    g: float = 9.81
    gains: OuterLoopGains = field(default_factory=OuterLoopGains)
    rate: float = 100.0
    stale_after: float = 0.05


@dataclass
class ControllerStates:
    thrust: ThrustControllerState
    last_a_star: np.ndarray = field(default_factory=lambda: np.zeros(3))
    last_attitude: AttitudeResult = None
    stale: bool = False

    @classmethod
    def create(cls, cfg, max_thrust=100.0):
        return cls(ThrustControllerState.create(cfg.alpha, cfg.beta, cutoff_hz=cfg.cutoff_hz,
                                                max_thrust=max_thrust))


def control_step(est, sp, modes, cfg, states, dt, a_meas=None, now=None):
    """Outer loop -> thrust law -> attitude command.

    ``est`` needs ``p``, ``v``, ``R`` and ``t``. When the estimate is older
    than ``cfg.stale_after`` the previous acceleration demand is held and
    ``states.stale`` is set.
    """
    now = est.t if now is None else now
    if now - est.t > cfg.stale_after:
        a_star = states.last_a_star
        states.stale = True
    else:
        a_star = desired_acceleration(est.p, est.v, sp, modes, cfg.gains)
        states.stale = False
    states.last_a_star = a_star
    if cfg.kind == ControllerKind.TMAF:
        if a_meas is None:
            raise ValueError("TMAF needs a measured acceleration")
        f_star, states.thrust = tmaf_thrust(a_star, a_meas, states.thrust, dt)
    else:
        f_star = da_thrust(a_star, cfg.assumed_mass, cfg.g)
        f_star[2] = min(max(f_star[2], 0.0), states.thrust.max_thrust)
    att = thrust_to_attitude(f_star, sp.yaw_des, est.R, states.last_attitude,
                             states.thrust.max_thrust)
    states.last_attitude = att
    return att.command, states, f_star
