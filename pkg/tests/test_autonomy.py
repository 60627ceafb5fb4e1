import numpy as np
import pytest

from aerograsp.autonomy import (AIRBORNE, LEGAL_EDGES, GripperFeedback, Inputs, MissionConfig,
                                MissionExecutive, Outcome, Phase, classify_grasp, grasp_test,
                                illegal_transitions, servo_setpoint)
from aerograsp.control import POSITION, VELOCITY
from aerograsp.harness.bench import mission_raw, run
from aerograsp.sensors import CameraModel
from aerograsp.world import FruitTarget, HarvestScene

ARM = np.array([0.84, 0.0, -0.15])
CFG = MissionConfig()


def test_servo_setpoint_examples():
    p = np.array([0.0, 0.0, 1.15])
    sp, modes = servo_setpoint(p + ARM + [1.0, 0, 0], p, np.eye(3), CFG, ARM)
    assert sp.v_des == pytest.approx([0.3, 0, 0])
    assert sp.p_des[1:] == pytest.approx(p[1:])
    assert modes.x == VELOCITY and modes.y == POSITION and modes.z == POSITION
    sp, _ = servo_setpoint(p + ARM + [0.25, 0, 0], p, np.eye(3), CFG, ARM)
    assert sp.v_des[0] == pytest.approx(0.1)
    sp, _ = servo_setpoint(p + ARM + [1.0, 0.03, 0], p, np.eye(3), CFG, ARM)
    assert sp.p_des[1] == pytest.approx(p[1] + 0.03)
    # overshoot reverses direction
    sp, _ = servo_setpoint(p + ARM + [-0.5, 0, 0], p, np.eye(3), CFG, ARM)
    assert sp.v_des[0] < 0


def test_classify_grasp_examples():
    assert classify_grasp(0.01, 0.05, 0.08) == Outcome.FULL
    assert classify_grasp(0.05, 0.05, 0.08) == Outcome.PARTIAL
    assert classify_grasp(0.09, 0.05, 0.08) == Outcome.MISS


def test_grasp_test_uses_nearest_attached_fruit():
    scene = HarvestScene([FruitTarget(0, np.array([1.0, 0, 1.0])),
                          FruitTarget(1, np.array([1.0, 0.3, 1.0]))])
    out, fid, d = grasp_test(np.array([1.0, 0.29, 1.0]), scene, 0.08)
    assert out == Outcome.FULL and fid == 1 and d == pytest.approx(0.01)
    out, fid, _ = grasp_test(np.array([3.0, 0, 1.0]), scene, 0.08)
    assert out == Outcome.MISS and fid is None


def test_mission_config_validation():
    with pytest.raises(ValueError):
        MissionConfig(grasp_tolerance=0.1)
    with pytest.raises(ValueError):
        MissionConfig(approach_speed=0.0)


def test_illegal_transition_validator():
    good = ["ArmMotors", "TakeOff", "Hover", "DetectApples", "SelectTarget", "Landing", "Disarm"]
    assert illegal_transitions(good) == []
    assert illegal_transitions(["ArmMotors", "Grasp"]) == [("ArmMotors", "Grasp")]
    assert all(Phase.LANDING in LEGAL_EDGES[p] for p in AIRBORNE)


def _exec():
    scene = HarvestScene([])
    scene.gripper = type("G", (), {"arm_offset": ARM})()
    scene.takeoff_point = (0, 0, 0)
    scene.delivery_point = (0, 0, 1.0)
    return MissionExecutive(CFG, scene, CameraModel())


def _inputs(t, p=(0, 0, 0), kill=False):
    return Inputs(t, np.array(p, float), np.zeros(3), np.eye(3), GripperFeedback(), kill)


def test_kill_on_ground_disarms():
    ex = _exec()
    d = ex.transition(_inputs(0.1, kill=True))
    assert d.phase == Phase.DISARM and not d.motors_on and "kill" in d.events


def test_executive_reaches_hover_and_lands_with_no_fruit():
    ex = _exec()
    t = 0.0
    for _ in range(3000):
        t += 0.01
        z = 1.0 if ex.phase not in (Phase.ARM, Phase.LANDING) else 0.0
        d = ex.transition(_inputs(t, (0, 0, z)))
        if d.phase == Phase.DISARM:
            break
    phases = [p for _, p in ex.log]
    assert phases == ["ArmMotors", "TakeOff", "Hover", "DetectApples", "SelectTarget", "Landing",
                      "Disarm"]


@pytest.fixture(scope="module")
def mission():
    return run(mission_raw(2, 3, noiseless=True))


def test_mission_phases_are_legal_and_jaw_open_while_reaching(mission):
    tel, rep = mission
    assert rep["illegal_transitions"] == 0 and rep["final_phase"] == "Disarm"
    reach = [j for ph, j in zip(tel["phase"], tel["jaw"]) if ph == "ReachTarget"]
    assert reach and all(j == "open" for j in reach)
    assert rep["grasp_success_rate"] == 1.0


def test_mission_delivers_each_fruit_once(mission):
    _, rep = mission
    delivered = [e for _, e in rep["events"] if e.startswith("deliver:")]
    assert len(delivered) == len(set(delivered)) == 2
