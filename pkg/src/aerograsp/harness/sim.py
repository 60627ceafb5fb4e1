"""Deterministic software-in-the-loop simulation of one scenario.

Clocks: rigid-body RK4 at 1 ms, IMU and EKF prediction at the IMU rate
(the base tick), SLAM and camera at their own rates, control, autonomy and
telemetry at 100 Hz. Every stochastic source has its own named RNG stream.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .. import _kernels, autonomy, perception
from ..autonomy import GripperFeedback, Inputs, MissionConfig, Outcome, Phase
from ..control import (ControlConfig, ControllerKind, ControllerStates, OuterLoopGains,
                       control_step)
from ..dynamics import (ControlCommand, PayloadAttachment, RigidBodyState, VehicleParams,
                        command_rotation, set_battery_decay, total_mass_inertia)
from ..estimation import EkfConfig, EkfState, ekf_predict, ekf_update_pose
from ..geometry import E3, log_so3, rot_to_euler, rot_z
from ..sensors import (CameraModel, DepthConfig, DetectorConfig, ImuConfig, SlamConfig,
                       TrackerConfig, sample_detections, sample_imu, sample_slam_pose,
                       stream_rng)
from ..world import active_disturbance, build_scene, detach_fruit
from .metrics import metrics_report
from .telemetry import TelemetryWriter, parse_lines

PHYSICS_DT = 1e-3
TELEMETRY_RATE = 100.0


def vehicle_params(cfg):
    v = cfg.vehicle
    params = VehicleParams(v.mass, np.diag(v.inertia), v.g, v.max_thrust, v.thrust_effectiveness,
                           np.array(v.att_kp), np.array(v.att_kd), v.torque_limit, v.drag)
    if v.battery is not None:
        params = set_battery_decay(params, v.battery.floor, v.battery.horizon, v.battery.start)
    return params


def sensor_configs(cfg):
    s = cfg.sensors
    imu = ImuConfig(s.imu.rate, s.imu.accel_noise, s.imu.gyro_noise, s.imu.accel_bias,
                    s.imu.gyro_bias)
    slam = SlamConfig(s.slam.rate, s.slam.pos_noise, math.radians(s.slam.angle_noise_deg),
                      s.slam.latency, s.slam.dropout)
    depth = DepthConfig(s.depth.rel_sigma, s.depth.max_sigma, s.depth.bound)
    det = DetectorConfig(s.detector.rate, s.detector.p_detect, s.detector.occlusion_angle)
    trk = TrackerConfig(s.tracker.p_fail, s.tracker.pixel_gate, s.tracker.reacquire_gate)
    if s.noiseless:
        imu = replace(imu, accel_noise=0.0, gyro_noise=0.0)
        slam = replace(slam, pos_noise=0.0, angle_noise=0.0, dropout=0.0)
        depth = replace(depth, rel_sigma=0.0, max_sigma=0.0)
        det = replace(det, p_detect=1.0)
        trk = replace(trk, p_fail=0.0)
    cam = CameraModel(math.radians(s.camera.fov_h_deg), math.radians(s.camera.fov_v_deg),
                      s.camera.max_range, offset=tuple(s.camera.offset))
    return imu, slam, depth, det, trk, cam


def ekf_config(cfg):
    e = cfg.ekf
    return EkfConfig(e.accel_noise, e.gyro_noise, e.accel_bias_walk, e.gyro_bias_walk,
                     e.pos_noise, math.radians(e.angle_noise_deg), gate_sigma=e.gate_sigma,
                     g=cfg.vehicle.g)


def control_config(cfg):
    c = cfg.control
    gains = OuterLoopGains(tuple(c.gains.kp_pos), tuple(c.gains.kd_pos), tuple(c.gains.kp_vel),
                           c.gains.a_max)
    return ControlConfig(ControllerKind(c.kind), tuple(c.alpha), tuple(c.beta), c.cutoff_hz,
                         c.assumed_mass, cfg.vehicle.g, gains, c.rate)


def mission_config(cfg):
    m = cfg.mission
    timeouts = dict(MissionConfig().timeouts)
    timeouts.update(m.phase_timeouts)
    return MissionConfig(hover_altitude=m.hover_altitude, hover_tolerance=m.hover_tolerance,
                         grasp_tolerance=m.grasp_tolerance, approach_speed=m.approach_speed,
                         slow_approach_range=m.slow_approach_range, final_gain=m.final_gain,
                         backward_travel=m.backward_travel, standoff=m.standoff,
                         hover_dwell=m.hover_dwell, detect_dwell=m.detect_dwell,
                         max_attempts=m.max_attempts, open_loop=m.open_loop, timeouts=timeouts)


def _ticks(rate, base_rate, name):
    ratio = base_rate / rate
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 or n < 1:
        raise ValueError(f"{name} rate {rate} must divide the base rate {base_rate}")
    return n


@dataclass
class _Gripper:
    jaw: str = "closed"
    close_done: float = None
    outcome: Outcome = None
    holding: int = None
    grasp_x: float = None
    detached: bool = False
    dropped: bool = False
    drop_at: float = None

    def feedback(self):
        return GripperFeedback(self.jaw, self.outcome, self.holding, self.detached, self.dropped)


class Simulation:
    def __init__(self, cfg, seed=None, telemetry_path=None):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else int(seed)
        names = ("scene", "imu", "slam", "camera", "tracker", "gripper")
        self.rng = {n: stream_rng(self.seed, n) for n in names}
        self.params = vehicle_params(cfg)
        (self.imu_cfg, self.slam_cfg, self.depth_cfg, self.det_cfg, self.trk_cfg,
         self.camera) = sensor_configs(cfg)
        self.ekf_cfg = ekf_config(cfg)
        self.ctrl_cfg = control_config(cfg)
        self.mission_cfg = mission_config(cfg)
        self.scene = build_scene(_SceneView(cfg), self.rng["scene"])
        self.base_positions = {f.id: f.position.copy() for f in self.scene.fruits}
        self.disturbances = list(self.scene.disturbances) + [
            d for d in build_scene(_SceneView(cfg, extra=True)).disturbances]
        self.arm_offset = np.asarray(self.scene.gripper.arm_offset, dtype=float)

        self.base_rate = self.imu_cfg.rate
        self.tick_dt = 1.0 / self.base_rate
        self.substeps = _ticks(self.base_rate, 1.0 / PHYSICS_DT, "IMU")
        self.control_every = _ticks(self.ctrl_cfg.rate, self.base_rate, "control")
        self.telemetry_every = _ticks(TELEMETRY_RATE, self.base_rate, "telemetry")
        self.slam_lag = int(round(self.slam_cfg.latency / self.tick_dt))

        p0 = self.scene.takeoff_point.copy()
        self.truth = RigidBodyState(p0.copy(), np.zeros(3), np.eye(3), np.zeros(3), 0.0)
        self.truth_hist = [(0.0, p0.copy(), np.eye(3))]
        self.ekf = EkfState.initial(self.ekf_cfg, p0 + np.asarray(cfg.ekf.initial_offset),
                                    t=0.0)
        self.ctrl = ControllerStates.create(self.ctrl_cfg, self.params.max_thrust)
        self.cmd = ControlCommand(0.0, 0.0, 0.0, 0.0)
        self.payload = None
        self.payload_events = sorted(cfg.vehicle.payload_events, key=lambda e: e.t)
        self._set_mass_props()
        self.gripper = _Gripper()

        if cfg.experiment in ("hover_bench", "disturb_bench"):
            hover = p0 + np.array([0.0, 0.0, self.mission_cfg.hover_altitude])
            self.exec = autonomy.HoverScript(self.mission_cfg, hover)
        else:
            self.exec = autonomy.MissionExecutive(self.mission_cfg, self.scene, self.camera,
                                                  tracker_cfg=self.trk_cfg)
        self.decision = None
        self.a_meas_sum = np.zeros(3)
        self.a_meas_n = 0
        self.pending_events = []
        self.disarmed_at = None
        meta = {"name": cfg.name, "experiment": cfg.experiment, "controller": cfg.control.kind,
                "seed": self.seed, "duration": cfg.duration,
                "metrics": {"window": cfg.metrics.window, "peak_window": cfg.metrics.peak_window}}
        self.writer = TelemetryWriter(_jsonable(meta), telemetry_path)

    # -- plant ------------------------------------------------------------
    def _set_mass_props(self):
        m, J = total_mass_inertia(self.params, self.payload)
        self.m_tot, self.J, self.J_inv = float(m), J, np.linalg.inv(J)
        if self.payload is None:
            self.m_p, self.r_p = 0.0, np.zeros(3)
        else:
            self.m_p, self.r_p = float(self.payload.mass), np.asarray(self.payload.offset, float)

    def _physics(self, t0):
        s = self.truth
        thrust = self.params.effectiveness(t0) * min(max(self.cmd.thrust, 0.0),
                                                     self.params.max_thrust)
        f_e = active_disturbance(self.disturbances, t0)
        p, v, R, w = _kernels.propagate(
            s.p, s.v, s.R, s.omega, float(thrust), command_rotation(self.cmd),
            self.params.att_kp, self.params.att_kd, float(self.params.torque_limit), f_e,
            self.m_tot, self.J, self.J_inv, self.m_p, self.r_p, float(self.params.g),
            float(self.params.drag), PHYSICS_DT, self.substeps, True)
        self.truth = RigidBodyState(p, v, R, w, t0 + self.tick_dt)

    # -- gripper ----------------------------------------------------------
    def _wrist_truth(self):
        return self.truth.p + self.truth.R @ self.arm_offset

    def _apply_actions(self, actions, t):
        g = self.gripper
        for a in actions:
            if a == "open":
                g.jaw, g.close_done, g.outcome = "open", None, None
            elif a == "close":
                g.jaw, g.close_done = "closing", t + self.scene.gripper.jaw_close_time
            elif a == "detach" and g.holding is not None and not g.detached:
                travel = g.grasp_x - self.truth.p[0]
                _, ok = detach_fruit(self.scene, g.holding, travel)
                if ok:
                    g.detached = True
                    fruit = self.scene.fruit(g.holding)
                    self.payload = PayloadAttachment(fruit.mass, self.arm_offset.copy())
                    self._set_mass_props()
                    p_drop = self.cfg.mission.drop_prob_partial
                    u = self.rng["gripper"].random()
                    if g.outcome == Outcome.PARTIAL and u < p_drop:
                        g.drop_at = t + 1.0
            elif a == "release":
                self.payload = None
                self._set_mass_props()
                self.gripper = _Gripper(jaw="open")

    def _update_gripper(self, t):
        g = self.gripper
        if g.jaw == "closing" and t >= g.close_done - 1e-9:
            g.jaw = "closed"
            outcome, fid, _ = autonomy.grasp_test(self._wrist_truth(), self.scene,
                                                  self.scene.gripper.jaw_open_radius)
            g.outcome = outcome
            if fid is not None:
                g.holding = fid
                g.grasp_x = self.truth.p[0]
                self.scene.fruit(fid).gripped = True
        if g.drop_at is not None and t >= g.drop_at and not g.dropped:
            g.dropped = True
            self.payload = None
            self._set_mass_props()

    def _payload_schedule(self, t):
        while self.payload_events and self.payload_events[0].t <= t + 1e-9:
            ev = self.payload_events.pop(0)
            off = self.arm_offset if ev.offset is None else np.asarray(ev.offset, float)
            self.payload = PayloadAttachment(ev.mass, off.copy())
            self._set_mass_props()
            self.pending_events.append(f"payload:{ev.mass!r}")

    # -- main loop --------------------------------------------------------
    def run(self):
        cfg = self.cfg
        n_ticks = int(round(cfg.duration / self.tick_dt))
        slam_every = self.base_rate / self.slam_cfg.rate
        cam_every = self.base_rate / self.det_cfg.rate
        try:
            for k in range(1, n_ticks + 1):
                t0 = (k - 1) * self.tick_dt
                t = k * self.tick_dt
                prev = self.truth
                self._physics(t0)
                if not (np.all(np.isfinite(self.truth.p)) and np.all(np.isfinite(self.truth.R))):
                    self.truth = prev
                    self.pending_events.append("nan_abort")
                    self._record(t)
                    break
                if self.scene.motions:
                    self.scene.apply_motion(t, self.base_positions)
                self._imu(prev, t)
                self.truth_hist.append((t, self.truth.p.copy(), self.truth.R.copy()))
                if len(self.truth_hist) > self.slam_lag + 2:
                    self.truth_hist.pop(0)
                if int(k / slam_every + 1e-9) != int((k - 1) / slam_every + 1e-9):
                    self._slam(t)
                if int(k / cam_every + 1e-9) != int((k - 1) / cam_every + 1e-9):
                    self._camera(t)
                if k % self.control_every == 0:
                    self._control(t)
                if k % self.telemetry_every == 0:
                    self._record(t)
                if self.exec.phase == Phase.DISARM:
                    if self.disarmed_at is None:
                        self.disarmed_at = t
                    elif t - self.disarmed_at >= 0.5 and k % self.telemetry_every == 0:
                        break
        finally:
            self.writer.close()
        return self

    def _imu(self, prev, t):
        dt = self.tick_dt
        a_avg = (self.truth.v - prev.v) / dt
        w_avg = log_so3(prev.R.T @ self.truth.R) / dt
        sample = sample_imu(prev, a_avg, self.imu_cfg, self.rng["imu"], self.params.g,
                            omega=w_avg)
        R_est = self.ekf.R
        self.a_meas_sum += R_est @ (sample.accel - self.ekf.ba) - self.params.g * E3
        self.a_meas_n += 1
        self.ekf = ekf_predict(self.ekf, sample, dt, self.ekf_cfg, inplace=True)

    def _slam(self, t):
        if len(self.truth_hist) <= self.slam_lag:
            return
        t_m, p, R = self.truth_hist[-1 - self.slam_lag]
        state = RigidBodyState(p, np.zeros(3), R, np.zeros(3), t_m)
        sample = sample_slam_pose(state, self.slam_cfg, self.rng["slam"], t)
        self.ekf = ekf_update_pose(self.ekf, sample, self.ekf_cfg, inplace=True)

    def _camera(self, t):
        dets = sample_detections(self.truth, self.camera, self.scene, self.rng["camera"],
                                 self.det_cfg, self.depth_cfg)
        self.exec.on_frame(dets, t, self.ekf.p, self.ekf.R, self.rng["tracker"])

    def _control(self, t):
        self._payload_schedule(t)
        self._update_gripper(t)
        kill = self.cfg.kill_at is not None and t >= self.cfg.kill_at - 1e-9
        inp = Inputs(t, self.ekf.p.copy(), self.ekf.v.copy(), self.ekf.R.copy(),
                     self.gripper.feedback(), kill)
        dec = self.exec.transition(inp)
        self._apply_actions(dec.actions, t)
        self.decision = dec
        self.pending_events.extend(dec.events)
        a_meas = self.a_meas_sum / max(self.a_meas_n, 1)
        self.a_meas_sum = np.zeros(3)
        self.a_meas_n = 0
        dt = 1.0 / self.ctrl_cfg.rate
        if not dec.motors_on:
            self.cmd = ControlCommand(0.0, 0.0, 0.0, self.cmd.yaw)
            self.ctrl = ControllerStates.create(self.ctrl_cfg, self.params.max_thrust)
            return
        self.cmd, self.ctrl, _ = control_step(self.ekf, dec.setpoint, dec.modes, self.ctrl_cfg,
                                              self.ctrl, dt, a_meas=a_meas, now=t)

    def _reference(self):
        dec = self.decision
        if self.cfg.experiment == "servo_bench" and dec is not None and dec.phase == Phase.REACH:
            tid = self.exec.tracker.target_id
            fruit = self.scene.fruits[0] if tid is None else self._truth_fruit_for(tid)
            target = fruit.position
            yaw = math.atan2(target[1] - self.truth.p[1], target[0] - self.truth.p[0])
            wrist = target - np.array([self.mission_cfg.standoff, 0.0, 0.0])
            return wrist - rot_z(yaw) @ self.arm_offset, yaw
        if dec is None:
            return self.truth.p.copy(), 0.0
        return np.asarray(dec.setpoint.p_des, float), float(dec.setpoint.yaw_des)

    def _truth_fruit_for(self, instance_id):
        try:
            c = perception.query_target(self.exec.map, instance_id)
        except perception.UnknownInstance:
            return self.scene.fruits[0]
        return min(self.scene.fruits, key=lambda f: float(np.linalg.norm(f.position - c)))

    def _record(self, t):
        s = self.truth
        rpy = rot_to_euler(s.R)
        erpy = rot_to_euler(self.ekf.R)
        ref, ref_yaw = self._reference()
        phase = self.exec.phase.value
        tid = getattr(self.exec, "target_id", None)
        row = [t, phase, *s.p, *rpy, *s.v, *self.ekf.p, *erpy, *ref, ref_yaw,
               self.cmd.thrust, self.cmd.roll, self.cmd.pitch, self.cmd.yaw,
               self.params.effectiveness(t), -1 if tid is None else int(tid),
               bool(self.exec.tracker.lost), self.gripper.jaw,
               0.0 if self.payload is None else self.payload.mass,
               ";".join(self.pending_events)]
        self.pending_events = []
        self.writer.write(row)

    def report(self):
        return metrics_report(parse_lines(self.writer.lines))


class _SceneView:
    """Adapts the scene section (and optionally only the top-level
    disturbances) to the attribute layout ``build_scene`` expects."""

    def __init__(self, cfg, extra=False):
        s = cfg.scene
        self.region = s.region
        self.fruits = [] if extra else s.fruits
        self.random_fruits = 0 if extra else s.random_fruits
        self.random_radius = s.random_radius
        self.random_mass = s.random_mass
        self.gripper = s.gripper
        self.disturbances = cfg.disturbances if extra else s.disturbances
        self.motions = [] if extra else s.motions
        self.takeoff_point = s.takeoff_point
        self.delivery_point = s.delivery_point
        self.hover_altitude = cfg.mission.hover_altitude


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    return x


def run_scenario(cfg, seed=None, telemetry_path=None):
    """Run ``cfg`` and return ``(telemetry_text, metrics_report)``."""
    sim = Simulation(cfg, seed, telemetry_path).run()
    return sim.writer.text(), sim.report()
