import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aerograsp.control import (ALL_POSITION, VELOCITY, AxisModes, ControlConfig, ControllerKind,
                               ControllerStates, OuterLoopGains, Setpoint, ThrustControllerState,
                               control_step, da_thrust, desired_acceleration, thrust_to_attitude,
                               tmaf_law, tmaf_thrust)
from aerograsp.dynamics import RigidBodyState, VehicleParams, propagate
from aerograsp.geometry import E3, euler_to_rot

GAINS = OuterLoopGains()


def test_desired_acceleration_examples():
    sp = Setpoint(np.zeros(3))
    assert np.array_equal(desired_acceleration(np.zeros(3), np.zeros(3), sp, ALL_POSITION, GAINS),
                          np.zeros(3))
    sp = Setpoint(np.zeros(3), np.array([0.3, 0, 0]))
    a = desired_acceleration(np.zeros(3), np.zeros(3), sp, AxisModes(VELOCITY), GAINS)
    assert a[0] == pytest.approx(0.6)
    sp = Setpoint(np.array([8.0, 6.0, 0.0]))
    a = desired_acceleration(np.zeros(3), np.zeros(3), sp, ALL_POSITION, GAINS)
    assert np.linalg.norm(a) == pytest.approx(4.0)
    assert a[0] / a[1] == pytest.approx(8 / 6)


def test_setpoint_must_be_finite():
    with pytest.raises(ValueError):
        Setpoint(np.array([np.nan, 0, 0]))


def test_tmaf_law_examples():
    prev = np.array([0, 0, 30.0])
    assert np.array_equal(tmaf_law(np.zeros(3), np.zeros(3), prev, 6, 0.8), prev)
    f = tmaf_law(np.array([0, 0, 0.5]), np.array([0, 0, 0.2]), prev, 2.0, 0.5)
    assert f == pytest.approx([0, 0, 31.1])


def test_tmaf_fixed_point_bit_identical():
    ctrl = ThrustControllerState.create(0.3, 0.05, f0=30.0)
    f, ctrl = tmaf_thrust(np.zeros(3), np.zeros(3), ctrl, 0.01)
    for _ in range(1000):
        f2, ctrl = tmaf_thrust(np.zeros(3), np.zeros(3), ctrl, 0.01)
        assert f2.tobytes() == f.tobytes()


def test_tmaf_clamps_vertical_thrust():
    ctrl = ThrustControllerState.create(1.0, 0.0, f0=1.0, max_thrust=50.0)
    f, _ = tmaf_thrust(np.array([0, 0, -100.0]), np.zeros(3), ctrl, 0.01)
    assert f[2] == 0.0
    f, _ = tmaf_thrust(np.array([0, 0, 100.0]), np.zeros(3), ctrl, 0.01)
    assert f[2] == 50.0
    with pytest.raises(ValueError):
        tmaf_thrust(np.zeros(3), np.zeros(3), ctrl, 0.0)


def test_tmaf_converges_to_hover_thrust_without_mass():
    # closed loop with perfect acceleration feedback from a 20 N seed
    params = VehicleParams()
    ctrl = ThrustControllerState.create((0.3, 0.3, 1.0), (0.05, 0.05, 0.02), f0=20.0)
    state = RigidBodyState(p=np.array([0, 0, 1.0]))
    sp = Setpoint(np.array([0, 0, 1.0]))
    a_meas = np.zeros(3)
    for _ in range(1500):
        a_star = desired_acceleration(state.p, state.v, sp, ALL_POSITION, GAINS)
        f, ctrl = tmaf_thrust(a_star, a_meas, ctrl, 0.01)
        att = thrust_to_attitude(f, 0.0, state.R)
        v0 = state.v
        state = propagate(state, att.command, params, dt=1e-3, n_steps=10)
        a_meas = (state.v - v0) / 0.01
    assert f[2] == pytest.approx(3.4 * 9.81, abs=1e-3)


def test_da_thrust_examples():
    assert da_thrust(np.zeros(3), 3.4) == pytest.approx([0, 0, 33.354])
    assert da_thrust(np.array([1.0, 0, 0]), 2.0) == pytest.approx([2, 0, 19.62])
    assert da_thrust(np.zeros(3), 1.0, f_e_est=np.array([1.0, 0, 0])) == pytest.approx([-1, 0, 9.81])
    with pytest.raises(ValueError):
        da_thrust(np.zeros(3), 0.0)


def test_thrust_to_attitude_examples():
    r = thrust_to_attitude(np.array([0, 0, 20.0]), 0.0, np.eye(3))
    assert r.command.roll == 0 and r.command.pitch == 0 and r.command.thrust == 20
    r = thrust_to_attitude(np.array([2.0, 0, 20.0]), 0.0, np.eye(3))
    b3 = r.R_des @ E3
    assert np.linalg.norm(np.cross(b3, [2, 0, 20])) / np.linalg.norm([2, 0, 20]) < 1e-9
    assert r.command.thrust == pytest.approx(20.0) and r.command.pitch > 0
    r = thrust_to_attitude(np.array([0, 0, 20.0]), math.pi / 2, np.eye(3))
    assert r.command.roll == pytest.approx(0) and r.command.pitch == pytest.approx(0)
    assert r.command.yaw == pytest.approx(math.pi / 2)


def test_thrust_to_attitude_degenerate_holds_previous():
    prev = thrust_to_attitude(np.array([1.0, 0, 20.0]), 0.0, np.eye(3))
    r = thrust_to_attitude(np.array([0.0, 0, 0.01]), 0.0, np.eye(3), prev)
    assert r.degenerate and r.command.pitch == prev.command.pitch
    r = thrust_to_attitude(np.array([5.0, 0, 0.0]), 0.0, np.eye(3), prev)
    assert r.degenerate


vec = st.lists(st.floats(-20, 20), min_size=3, max_size=3).map(np.array)


@given(vec, st.floats(-3, 3))
def test_thrust_to_attitude_alignment(f, yaw):
    f = f + np.array([0, 0, 25.0])
    r = thrust_to_attitude(f, yaw, np.eye(3))
    if not r.degenerate:
        assert np.allclose(r.R_des.T @ r.R_des, np.eye(3), atol=1e-12)
        assert np.linalg.norm(np.cross(r.R_des @ E3, f / np.linalg.norm(f))) < 1e-9
        assert abs(r.command.roll) <= math.pi / 4 + 1e-12
        assert abs(r.command.pitch) <= math.pi / 4 + 1e-12


def _est(p=(0, 0, 1.0), v=(0, 0, 0), R=np.eye(3), t=0.0):
    return SimpleNamespace(p=np.array(p, float), v=np.array(v, float), R=R, t=t)


def test_control_step_hover_da():
    cfg = ControlConfig(kind=ControllerKind.DA)
    states = ControllerStates.create(cfg)
    cmd, states, _ = control_step(_est(), Setpoint(np.array([0, 0, 1.0]), yaw_des=0.3), ALL_POSITION,
                                  cfg, states, 0.01)
    assert cmd.thrust == pytest.approx(33.354)
    assert cmd.roll == pytest.approx(0, abs=1e-12) and cmd.pitch == pytest.approx(0, abs=1e-12)
    assert cmd.yaw == pytest.approx(0.3)


def test_control_step_forward_setpoint_pitches_forward():
    for kind in ControllerKind:
        cfg = ControlConfig(kind=kind)
        states = ControllerStates.create(cfg)
        states.thrust = ThrustControllerState.create(cfg.alpha, cfg.beta, f0=33.354)
        cmd, _, _ = control_step(_est(), Setpoint(np.array([1.0, 0, 1.0])), ALL_POSITION, cfg,
                                 states, 0.01, a_meas=np.zeros(3))
        assert cmd.pitch > 0 and euler_to_rot(cmd.roll, cmd.pitch, cmd.yaw)[0, 2] > 0


def test_control_step_stale_estimate_holds_demand():
    cfg = ControlConfig(kind=ControllerKind.DA)
    states = ControllerStates.create(cfg)
    _, states, f1 = control_step(_est(), Setpoint(np.array([1.0, 0, 1.0])), ALL_POSITION, cfg,
                                 states, 0.01)
    _, states, f2 = control_step(_est(t=0.0), Setpoint(np.zeros(3)), ALL_POSITION, cfg, states,
                                 0.01, now=0.2)
    assert states.stale and np.array_equal(f1, f2)


def test_tmaf_requires_measurement():
    cfg = ControlConfig()
    with pytest.raises(ValueError):
        control_step(_est(), Setpoint(), ALL_POSITION, cfg, ControllerStates.create(cfg), 0.01)
