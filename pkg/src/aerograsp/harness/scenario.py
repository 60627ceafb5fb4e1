"""Scenario files: strict JSON schema with named default presets."""

import copy
import json
import math
from typing import Annotated, List, Literal, Optional, Tuple

from pydantic import (BaseModel, BeforeValidator, ConfigDict, Field, ValidationError,
                      model_validator)

Vec3 = Tuple[float, float, float]


def _broadcast3(v):
    return (v, v, v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v


# per-axis gain: a scalar applies to all three axes
Gain3 = Annotated[Vec3, BeforeValidator(_broadcast3)]


class ScenarioError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BatterySection(_Strict):
    floor: float = Field(0.5, gt=0, le=1)
    horizon: float = Field(60.0, gt=0)
    start: float = Field(0.0, ge=0)


class PayloadEvent(_Strict):
    t: float = Field(ge=0)
    mass: float = Field(gt=0)
    offset: Optional[Vec3] = None   # defaults to the gripper arm offset


class VehicleSection(_Strict):
    mass: float = Field(3.4, gt=0)
    inertia: Vec3 = (0.045, 0.045, 0.08)
    g: float = 9.81
    max_thrust: float = 100.0
    thrust_effectiveness: float = Field(1.0, gt=0, le=1)
    att_kp: Vec3 = (60.0, 60.0, 12.0)
    att_kd: Vec3 = (4.5, 4.5, 1.8)
    torque_limit: float = Field(10.0, gt=0)
    drag: float = Field(0.0, ge=0)
    battery: Optional[BatterySection] = None
    payload_events: List[PayloadEvent] = []


class ImuSection(_Strict):
    rate: float = 200.0
    accel_noise: float = Field(0.05, ge=0)
    gyro_noise: float = Field(0.002, ge=0)
    accel_bias: Vec3 = (0.0, 0.0, 0.0)
    gyro_bias: Vec3 = (0.0, 0.0, 0.0)


class SlamSection(_Strict):
    rate: float = Field(60.0, gt=0, le=200)
    pos_noise: float = Field(0.015, ge=0)
    angle_noise_deg: float = Field(0.5, ge=0)
    latency: float = Field(0.02, ge=0, le=0.4)
    dropout: float = Field(0.0, ge=0, lt=1)


class DepthSection(_Strict):
    rel_sigma: float = Field(0.01, ge=0)
    max_sigma: float = Field(0.015, ge=0)
    bound: float = Field(0.03, ge=0)


class DetectorSection(_Strict):
    rate: float = Field(30.0, gt=0, le=200)
    p_detect: float = Field(0.95, ge=0, le=1)
    occlusion_angle: float = Field(0.04, ge=0)


class TrackerSection(_Strict):
    p_fail: float = Field(0.02, ge=0, le=1)
    pixel_gate: float = Field(40.0, gt=0)
    reacquire_gate: float = Field(0.10, gt=0)


class CameraSection(_Strict):
    fov_h_deg: float = 69.0
    fov_v_deg: float = 42.0
    max_range: float = Field(3.0, gt=0)
    offset: Vec3 = (0.0, 0.0, 0.0)


class SensorsSection(_Strict):
    # zero every noise term, dropout and tracker failure; detection is certain
    noiseless: bool = False
    imu: ImuSection = ImuSection()
    slam: SlamSection = SlamSection()
    depth: DepthSection = DepthSection()
    detector: DetectorSection = DetectorSection()
    tracker: TrackerSection = TrackerSection()
    camera: CameraSection = CameraSection()


class EkfSection(_Strict):
    accel_noise: float = Field(0.05, gt=0)
    gyro_noise: float = Field(0.002, gt=0)
    accel_bias_walk: float = Field(1e-4, gt=0)
    gyro_bias_walk: float = Field(1e-5, gt=0)
    pos_noise: float = Field(0.015, gt=0)
    angle_noise_deg: float = Field(0.5, gt=0)
    gate_sigma: float = Field(5.0, gt=0)
    initial_offset: Vec3 = (0.0, 0.0, 0.0)


class GainsSection(_Strict):
    kp_pos: Vec3 = (1.6, 1.6, 2.5)
    kd_pos: Vec3 = (2.2, 2.2, 2.8)
    kp_vel: Vec3 = (2.0, 2.0, 2.5)
    a_max: float = Field(4.0, gt=0)


class ControlSection(_Strict):
    kind: Literal["tmaf", "da"] = "tmaf"
    alpha: Gain3 = (0.3, 0.3, 1.0)
    beta: Gain3 = (0.05, 0.05, 0.02)
    cutoff_hz: float = Field(20.0, gt=0)
    assumed_mass: float = Field(3.4, gt=0)
    rate: float = Field(100.0, gt=0)
    gains: GainsSection = GainsSection()


class MissionSection(_Strict):
    hover_altitude: float = Field(1.0, gt=0)
    hover_tolerance: float = Field(0.05, gt=0)
    grasp_tolerance: float = Field(0.02, gt=0)
    approach_speed: float = Field(0.3, gt=0)
    slow_approach_range: float = Field(0.4, ge=0)
    final_gain: float = Field(2.0, gt=0)
    backward_travel: float = Field(0.20, gt=0)
    standoff: float = Field(0.0, ge=0)
    hover_dwell: float = Field(1.0, ge=0)
    detect_dwell: float = Field(1.0, gt=0)
    max_attempts: int = Field(2, ge=1)
    open_loop: bool = False
    # probability that a partial grasp slips out during delivery
    drop_prob_partial: float = Field(0.0, ge=0, le=1)
    phase_timeouts: dict = {}

    @model_validator(mode="after")
    def _tolerances(self):
        if not self.grasp_tolerance < self.hover_tolerance:
            raise ValueError("grasp_tolerance must be below hover_tolerance")
        return self


class RegionSection(_Strict):
    origin: Vec3 = (1.8, -1.1, 0.8)
    width: float = Field(2.2, gt=0)
    height: float = Field(0.7, gt=0)
    depth: float = Field(0.1, ge=0)


class FruitSection(_Strict):
    pos: Vec3
    radius: float = 0.06
    mass: float = 0.3
    detach_distance: float = Field(0.15, gt=0)


class GripperSection(_Strict):
    arm_offset: Vec3 = (0.84, 0.0, -0.15)
    jaw_open_radius: float = Field(0.08, gt=0)
    jaw_close_time: float = Field(0.5, gt=0)


class DisturbanceSection(_Strict):
    start: float = Field(ge=0)
    duration: float = Field(gt=0)
    force: Vec3


class MotionSection(_Strict):
    fruit_id: int = Field(ge=0)
    amplitude: Vec3
    period: float = Field(gt=0)
    start: float = Field(0.0, ge=0)


class SceneSection(_Strict):
    region: RegionSection = RegionSection()
    fruits: List[FruitSection] = []
    random_fruits: int = Field(0, ge=0)
    random_radius: float = 0.04
    random_mass: float = 0.3
    takeoff_point: Vec3 = (0.0, 0.0, 0.0)
    delivery_point: Optional[Vec3] = None
    gripper: GripperSection = GripperSection()
    disturbances: List[DisturbanceSection] = []
    motions: List[MotionSection] = []


class MetricsSection(_Strict):
    window: Optional[Tuple[float, float]] = None
    peak_window: Optional[Tuple[float, float]] = None


class ScenarioConfig(_Strict):
    name: str = "scenario"
    seed: int = 0
    duration: float = Field(120.0, gt=0, le=600)
    experiment: Literal["mission", "hover_bench", "disturb_bench", "servo_bench"] = "mission"
    kill_at: Optional[float] = Field(None, ge=0)
    vehicle: VehicleSection = VehicleSection()
    sensors: SensorsSection = SensorsSection()
    ekf: EkfSection = EkfSection()
    control: ControlSection = ControlSection()
    mission: MissionSection = MissionSection()
    scene: SceneSection = SceneSection()
    disturbances: List[DisturbanceSection] = []
    metrics: MetricsSection = MetricsSection()

    @model_validator(mode="after")
    def _checks(self):
        for m in self.scene.motions:
            if self.scene.random_fruits == 0 and m.fruit_id >= len(self.scene.fruits):
                raise ValueError(f"motion refers to unknown fruit {m.fruit_id}")
        for w in (self.metrics.window, self.metrics.peak_window):
            if w is not None and not 0 <= w[0] < w[1]:
                raise ValueError("metrics window must satisfy 0 <= t0 < t1")
            if w is not None and w[0] >= self.duration:
                raise ValueError("metrics window starts after the end of the run")
        if self.vehicle.max_thrust < 1.4 * self.vehicle.mass * self.vehicle.g:
            raise ValueError("vehicle.max_thrust must be at least 1.4 * m * g")
        if not all(math.isfinite(x) for x in self.scene.takeoff_point):
            raise ValueError("takeoff point must be finite")
        return self

    def all_disturbances(self):
        return list(self.scene.disturbances) + list(self.disturbances)


PRESETS = {
    "hover_bench": {
        "experiment": "hover_bench", "duration": 30.0,
        "metrics": {"window": [10.0, 30.0]},
    },
    "battery_bench": {
        "experiment": "hover_bench", "duration": 70.0,
        "vehicle": {"battery": {"floor": 0.5, "horizon": 60.0, "start": 10.0}},
        "metrics": {"window": [10.0, 70.0]},
    },
    "disturb_bench": {
        "experiment": "disturb_bench", "duration": 20.0,
        "disturbances": [{"start": 12.0, "duration": 1.0, "force": [15.0, 0.0, 0.0]}],
        "metrics": {"window": [8.0, 12.0], "peak_window": [12.0, 20.0]},
    },
    "payload_bench": {
        "experiment": "hover_bench", "duration": 20.0,
        "vehicle": {"payload_events": [{"t": 10.0, "mass": 0.3}]},
        "metrics": {"window": [10.0, 20.0]},
    },
    "servo_bench": {
        "experiment": "servo_bench", "duration": 40.0,
        "mission": {"standoff": 0.20},
        "scene": {"fruits": [{"pos": [1.8, 0.0, 0.95]}],
                  "motions": [{"fruit_id": 0, "amplitude": [0.05, 0.1, 0.05],
                               "period": 12.0, "start": 15.0}]},
        "metrics": {"window": [15.0, 40.0]},
    },
    "mission": {"experiment": "mission", "duration": 120.0},
}


def deep_merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(raw):
    """Expand ``include_defaults`` (a preset name or list of names)."""
    raw = dict(raw)
    names = raw.pop("include_defaults", None)
    if names is None:
        return raw
    if isinstance(names, str):
        names = [names]
    merged = {}
    for n in names:
        if n not in PRESETS:
            raise ScenarioError(f"unknown preset {n!r}; known: {sorted(PRESETS)}")
        merged = deep_merge(merged, PRESETS[n])
    return deep_merge(merged, raw)


def parse_scenario(raw):
    if not isinstance(raw, dict):
        raise ScenarioError("scenario must be a JSON object")
    try:
        return ScenarioConfig.model_validate(resolve(raw))
    except ValidationError as e:
        raise ScenarioError(str(e)) from None


def load_scenario(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ScenarioError(f"cannot read scenario {path}: {e}") from None
    return parse_scenario(raw)


def scenario(**kw):
    """Build a config in code: ``scenario(include_defaults="hover_bench", seed=3)``."""
    return parse_scenario(kw)


def json_schema():
    return ScenarioConfig.model_json_schema()
