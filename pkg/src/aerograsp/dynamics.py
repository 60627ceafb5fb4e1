"""Rigid-body quadrotor model: translational and rotational equations of
motion, an attitude inner loop, off-centre payload and battery decay."""

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernels
from .geometry import E3, euler_to_rot, skew  # noqa: F401  (skew re-exported)

MAX_ANGLE = np.pi / 4


@dataclass
class RigidBodyState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    R: np.ndarray = field(default_factory=lambda: np.eye(3))
    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float = 0.0

    def copy(self):
        return RigidBodyState(self.p.copy(), self.v.copy(), self.R.copy(),
                              self.omega.copy(), self.t)


@dataclass(frozen=True)
class BatteryDecay:
    """Thrust effectiveness falling linearly from 1 to ``floor``."""
    floor: float
    horizon: float
    start: float = 0.0

    def effectiveness(self, t):
        if t <= self.start:
            return 1.0
        frac = min(1.0, (t - self.start) / self.horizon)
        return 1.0 - (1.0 - self.floor) * frac


@dataclass(frozen=True)
class VehicleParams:
    mass: float = 3.4
    inertia: np.ndarray = field(default_factory=lambda: np.diag([0.045, 0.045, 0.08]))
    g: float = 9.81
    max_thrust: float = 100.0
    thrust_effectiveness: float = 1.0
    att_kp: np.ndarray = field(default_factory=lambda: np.array([60.0, 60.0, 12.0]))
    att_kd: np.ndarray = field(default_factory=lambda: np.array([4.5, 4.5, 1.8]))
    torque_limit: float = 10.0
    drag: float = 0.0
    battery: Optional[BatteryDecay] = None

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        if not np.allclose(J, J.T) or np.any(np.linalg.eigvalsh(J) <= 0):
            raise ValueError("inertia must be symmetric positive definite")
        if self.max_thrust < 1.4 * self.mass * self.g:
            raise ValueError("max_thrust must be at least 1.4 * m * g")
        if not 0.0 < self.thrust_effectiveness <= 1.0:
            raise ValueError("thrust_effectiveness must lie in (0, 1]")

    def effectiveness(self, t):
        base = self.thrust_effectiveness
        if self.battery is None:
            return base
        return base * self.battery.effectiveness(t)


@dataclass(frozen=True)
class ControlCommand:
    thrust: float
    roll: float
    pitch: float
    yaw: float


@dataclass(frozen=True)
class PayloadAttachment:
    mass: float
    offset: np.ndarray


def set_battery_decay(params, floor, horizon, start=0.0):
    """Return a copy of ``params`` whose thrust effectiveness decays
    linearly to ``floor`` over ``horizon`` seconds after ``start``."""
    if floor <= 0 or floor > 1:
        raise ValueError("battery floor must lie in (0, 1]")
    if horizon <= 0:
        raise ValueError("battery horizon must be positive")
    return replace(params, battery=BatteryDecay(float(floor), float(horizon), float(start)))


def total_mass_inertia(params, payload=None):
    """Mass and inertia about the body origin including a point payload."""
    if payload is None:
        return params.mass, np.asarray(params.inertia, dtype=float)
    r = np.asarray(payload.offset, dtype=float)
    J = np.asarray(params.inertia, dtype=float) + payload.mass * (r @ r * np.eye(3) - np.outer(r, r))
    return params.mass + payload.mass, J


def command_rotation(cmd):
    roll = float(np.clip(cmd.roll, -MAX_ANGLE, MAX_ANGLE))
    pitch = float(np.clip(cmd.pitch, -MAX_ANGLE, MAX_ANGLE))
    return euler_to_rot(roll, pitch, cmd.yaw)


def attitude_inner_loop(state, cmd, params):
    """PD torque driving the body attitude to the commanded Euler angles."""
    return _kernels.attitude_torque(
        np.asarray(state.R, dtype=float), command_rotation(cmd),
        np.asarray(state.omega, dtype=float), np.asarray(params.att_kp, dtype=float),
        np.asarray(params.att_kd, dtype=float), float(params.torque_limit))


def payload_torque(state, payload, g=9.81):
    """Body-frame torque of the payload weight about the vehicle centre."""
    return _kernels.payload_torque(np.asarray(state.R, dtype=float), float(payload.mass),
                                   np.asarray(payload.offset, dtype=float), float(g))


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input to dynamics")


def propagate(state, cmd, params, payload=None, f_e=None, dt=1e-3, n_steps=1, ground=False):
    """Advance ``n_steps`` RK4 steps of size ``dt`` holding ``cmd`` fixed.

    The attitude inner loop is re-evaluated every step. ``ground`` enables
    a flat ground plane at z = 0.
    """
    if not 0.0 < dt <= 0.01:
        raise ValueError("dt must lie in (0, 0.01]")
    f_e = np.zeros(3) if f_e is None else np.asarray(f_e, dtype=float)
    _check_finite(state.p, state.v, state.R, state.omega, f_e,
                  np.array([cmd.thrust, cmd.roll, cmd.pitch, cmd.yaw]))
    m, J = total_mass_inertia(params, payload)
    if payload is None:
        m_p, r_p = 0.0, np.zeros(3)
    else:
        m_p, r_p = float(payload.mass), np.asarray(payload.offset, dtype=float)
    thrust = params.effectiveness(state.t) * float(np.clip(cmd.thrust, 0.0, params.max_thrust))
    p, v, R, w = _kernels.propagate(
        np.asarray(state.p, dtype=float), np.asarray(state.v, dtype=float),
        np.asarray(state.R, dtype=float), np.asarray(state.omega, dtype=float),
        thrust, command_rotation(cmd), np.asarray(params.att_kp, dtype=float),
        np.asarray(params.att_kd, dtype=float), float(params.torque_limit),
        f_e, float(m), J, np.linalg.inv(J), m_p, r_p, float(params.g),
        float(params.drag), float(dt), int(n_steps), bool(ground))
    return RigidBodyState(p, v, R, w, state.t + n_steps * dt)


def step_dynamics(state, cmd, params, payload=None, f_e=None, dt=1e-3):
    """One RK4 step of the full rigid-body model."""
    return propagate(state, cmd, params, payload, f_e, dt, 1, False)
