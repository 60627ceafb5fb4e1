"""Mission state machine for autonomous fruit grasping.

The executive runs on the control clock. Each tick it reads the estimate,
the instance map, the tracker and gripper feedback, decides the phase and
returns a setpoint, per-axis modes and gripper actions. Ground-truth effects
of those actions (grasp test, detachment, payload) are applied by the
simulation.
"""

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import perception
from .control import ALL_POSITION, POSITION, SERVO_MODES, VELOCITY, AxisModes, Setpoint
from .geometry import rot_z, yaw_of
from .sensors import TrackerState, track_target


class Phase(str, enum.Enum):
    ARM = "ArmMotors"
    TAKEOFF = "TakeOff"
    HOVER = "Hover"
    DETECT = "DetectApples"
    SELECT = "SelectTarget"
    REACH = "ReachTarget"
    GRASP = "Grasp"
    DELIVERY = "Delivery"
    LANDING = "Landing"
    DISARM = "Disarm"


LEGAL_EDGES = {
    Phase.ARM: {Phase.TAKEOFF, Phase.DISARM},
    Phase.TAKEOFF: {Phase.HOVER, Phase.LANDING},
    Phase.HOVER: {Phase.DETECT, Phase.LANDING},
    Phase.DETECT: {Phase.SELECT, Phase.LANDING},
    Phase.SELECT: {Phase.REACH, Phase.LANDING},
    Phase.REACH: {Phase.GRASP, Phase.HOVER, Phase.LANDING},
    Phase.GRASP: {Phase.DELIVERY, Phase.HOVER, Phase.LANDING},
    Phase.DELIVERY: {Phase.HOVER, Phase.LANDING},
    Phase.LANDING: {Phase.DISARM},
    Phase.DISARM: set(),
}
AIRBORNE = {Phase.TAKEOFF, Phase.HOVER, Phase.DETECT, Phase.SELECT, Phase.REACH,
            Phase.GRASP, Phase.DELIVERY}


def illegal_transitions(phases):
    """Consecutive (from, to) pairs of a phase sequence that are not edges."""
    bad = []
    for a, b in zip(phases, phases[1:]):
        a, b = Phase(a), Phase(b)
        if a != b and b not in LEGAL_EDGES[a]:
            bad.append((a.value, b.value))
    return bad


class Outcome(str, enum.Enum):
    FULL = "FullGrasp"
    PARTIAL = "PartialGrasp"
    MISS = "Miss"
    DROPPED = "DroppedInTransit"
    # selection ended by kill-switch or timeout before any grasp trial
    ABORTED = "Aborted"


SUCCESS = {Outcome.FULL, Outcome.PARTIAL, Outcome.DROPPED}


@dataclass
class GraspEvent:
    fruit_id: int
    t_selected: float
    t_grasped: float = None
    t_delivered: float = None
    outcome: Outcome = None


@dataclass(frozen=True)
class MissionConfig:
    hover_altitude: float = 1.0
    hover_tolerance: float = 0.05
    grasp_tolerance: float = 0.02
    approach_speed: float = 0.3
    slow_approach_range: float = 0.4
    final_gain: float = 2.0
    backward_travel: float = 0.20
    standoff: float = 0.0
    arm_time: float = 0.5
    hover_dwell: float = 1.0
    detect_dwell: float = 1.0
    delivery_dwell: float = 0.3
    landing_speed: float = 0.4
    touchdown_height: float = 0.05
    max_attempts: int = 2
    open_loop: bool = False
    timeouts: dict = field(default_factory=lambda: {
        "TakeOff": 15.0, "Hover": 10.0, "ReachTarget": 30.0, "Grasp": 10.0,
        "Delivery": 20.0, "Landing": 20.0})

    def __post_init__(self):
        if not self.grasp_tolerance < self.hover_tolerance:
            raise ValueError("grasp_tolerance must be below hover_tolerance")
        if self.approach_speed <= 0:
            raise ValueError("approach_speed must be positive")


def classify_grasp(distance, radius, capture_radius):
    """Full inside half a radius, partial up to the capture radius, else miss."""
    if distance <= 0.5 * radius:
        return Outcome.FULL
    if distance <= capture_radius:
        return Outcome.PARTIAL
    return Outcome.MISS


def grasp_test(wrist, scene, capture_radius):
    """Ground-truth grasp check at jaw closure.

    Returns ``(outcome, fruit_id, distance)`` for the attached fruit nearest
    the wrist; fruit_id is None on a miss with no fruit in reach.
    """
    best = None
    for f in scene.attached_fruits():
        d = float(np.linalg.norm(f.position - wrist))
        if best is None or d < best[0]:
            best = (d, f)
    if best is None:
        return Outcome.MISS, None, math.inf
    d, f = best
    outcome = classify_grasp(d, f.radius, capture_radius)
    return outcome, (f.id if outcome != Outcome.MISS else None), d


def wrist_position(p, R, arm_offset):
    return np.asarray(p) + np.asarray(R) @ np.asarray(arm_offset, dtype=float)


def servo_setpoint(target, p, R, cfg, arm_offset):
    """Visual-servo setpoint: velocity along world x, position in y and z.

    The wrist (``p + R @ arm_offset``) is brought to ``target`` shifted back
    by ``cfg.standoff`` along x. Speed is ``approach_speed``, a third of it
    inside ``slow_approach_range``, tapering linearly within the last few
    centimetres so the vehicle settles instead of chattering.
    """
    target = np.asarray(target, dtype=float)
    arm_world = np.asarray(R) @ np.asarray(arm_offset, dtype=float)
    wrist = p + arm_world
    dx = target[0] - cfg.standoff - wrist[0]
    speed = cfg.approach_speed if abs(dx) > cfg.slow_approach_range else cfg.approach_speed / 3
    vx = math.copysign(min(speed, cfg.final_gain * abs(dx)), dx)
    p_des = np.array([p[0], target[1] - arm_world[1], target[2] - arm_world[2]])
    yaw = math.atan2(target[1] - p[1], target[0] - p[0])
    return Setpoint(p_des, np.array([vx, 0.0, 0.0]), yaw), SERVO_MODES


@dataclass
class GripperFeedback:
    jaw: str = "closed"          # "open" | "closing" | "closed"
    outcome: Outcome = None      # set once a closure completes
    holding: int = None          # truth fruit id between grasp and release
    detached: bool = False
    dropped: bool = False


@dataclass
class Inputs:
    t: float
    p: np.ndarray
    v: np.ndarray
    R: np.ndarray
    gripper: GripperFeedback
    kill: bool = False


@dataclass
class Decision:
    phase: Phase
    setpoint: Setpoint
    modes: AxisModes
    actions: list = field(default_factory=list)
    events: list = field(default_factory=list)
    motors_on: bool = True


class HoverScript:
    """Take off and hold the hover spot; used by the hover benchmarks."""

    def __init__(self, cfg, hover_point):
        self.cfg = cfg
        self.hover_point = np.asarray(hover_point, dtype=float)
        self.phase = Phase.ARM
        self.entered = 0.0
        self.log = [(0.0, Phase.ARM.value)]
        self.events = []
        self.target_id = None
        self.tracker = TrackerState(lost=False)

    def on_frame(self, detections, t, p, R, rng):
        pass

    def _goto(self, phase, t):
        self.phase = phase
        self.entered = t
        self.log.append((t, phase.value))

    def transition(self, inp):
        ground = np.array([self.hover_point[0], self.hover_point[1], 0.0])
        if self.phase == Phase.ARM and inp.t - self.entered >= self.cfg.arm_time:
            self._goto(Phase.TAKEOFF, inp.t)
        elif self.phase == Phase.TAKEOFF and np.linalg.norm(inp.p - self.hover_point) < 0.1:
            self._goto(Phase.HOVER, inp.t)
        sp = Setpoint(ground if self.phase == Phase.ARM else self.hover_point.copy(), np.zeros(3), 0.0)
        return Decision(self.phase, sp, ALL_POSITION)


class MissionExecutive:
    """Arm, take off, hover, detect, select, reach, grasp, deliver, land."""

    def __init__(self, cfg, scene, camera, map_gate=0.07, tracker_cfg=None):
        self.cfg = cfg
        self.camera = camera
        self.arm_offset = np.asarray(scene.gripper.arm_offset, dtype=float)
        self.takeoff = np.asarray(scene.takeoff_point, dtype=float)
        self.hover_point = self.takeoff + np.array([0.0, 0.0, cfg.hover_altitude])
        self.delivery_point = np.asarray(scene.delivery_point, dtype=float)
        self.map = perception.InstanceMap(assoc_gate=map_gate)
        self.tracker_cfg = tracker_cfg
        self.phase = Phase.ARM
        self.entered = 0.0
        self.log = [(0.0, Phase.ARM.value)]
        self.events = []
        self.current = None
        self.target_id = None
        self.tracker = TrackerState(lost=False)
        self.attempts = {}
        self.stable_since = None
        self.abort_pending = False
        self.killed = False
        self.substep = None
        self.hold = None
        self.frozen_target = None
        self.landing_xy = self.takeoff[:2].copy()
        self.ground_since = None
        self.pull_start = None

    # -- perception -------------------------------------------------------
    def on_frame(self, detections, t, p, R, rng):
        """Camera-clock hook: map update and target tracking."""
        if self.phase == Phase.DETECT:
            perception.update_map(self.map, [d.centroid_3d for d in detections], t)
        elif self.phase == Phase.REACH and self.target_id is not None:
            try:
                centroid = perception.query_target(self.map, self.target_id)
            except perception.UnknownInstance:
                return
            q = self.camera.to_camera(p, R, centroid)
            predicted = self.camera.project(q) if q[0] > 1e-6 else None
            kw = {} if self.tracker_cfg is None else {"cfg": self.tracker_cfg}
            self.tracker = track_target(self.tracker, detections, rng, predicted_pixel=predicted,
                                        map_centroid=centroid, **kw)
            if not self.tracker.lost and not self.cfg.open_loop:
                perception.update_map(self.map, [self.tracker.centroid], t)

    # -- helpers ----------------------------------------------------------
    def _goto(self, phase, t, actions):
        if phase not in LEGAL_EDGES[self.phase]:
            raise RuntimeError(f"illegal transition {self.phase.value} -> {phase.value}")
        self.phase = phase
        self.entered = t
        self.log.append((t, phase.value))
        self.stable_since = None
        self.substep = None
        if phase == Phase.LANDING:
            self.ground_since = None

    def _event(self, t, text, events):
        events.append(text)
        self.events.append((t, text))

    def _close_current(self, outcome, t, events):
        if self.current is not None:
            self.current.outcome = outcome
            self._event(t, f"{'abort' if outcome == Outcome.ABORTED else 'grasp'}:"
                           f"{outcome.value}:{self.current.fruit_id}", events)
            if outcome in (Outcome.ABORTED,):
                self.current = None

    def _timed_out(self, t):
        limit = self.cfg.timeouts.get(self.phase.value)
        return limit is not None and t - self.entered > limit

    def _hover_sp(self):
        return Setpoint(self.hover_point.copy(), np.zeros(3), 0.0)

    def _stable(self, inp, target):
        if np.linalg.norm(inp.p - target) < self.cfg.hover_tolerance:
            if self.stable_since is None:
                self.stable_since = inp.t
            return inp.t - self.stable_since >= self.cfg.hover_dwell
        self.stable_since = None
        return False

    def _landing(self, t, actions, events, in_place):
        if self.current is not None and self.current.outcome is None:
            self._close_current(Outcome.ABORTED, t, events)
        self._goto(Phase.LANDING, t, actions)

    # -- main tick --------------------------------------------------------
    def transition(self, inp):
        actions, events = [], []
        t = inp.t
        if inp.kill and not self.killed:
            self.killed = True
            self._event(t, "kill", events)
            if self.phase == Phase.ARM:
                self._goto(Phase.DISARM, t, actions)
            elif self.phase in AIRBORNE:
                self.landing_xy = inp.p[:2].copy()
                self._landing(t, actions, events, True)
        self._advance(inp, actions, events)
        sp, modes = self._setpoint(inp)
        return Decision(self.phase, sp, modes, actions, events, self.phase != Phase.DISARM)

    def _advance(self, inp, actions, events):
        t = inp.t
        ph = self.phase
        cfg = self.cfg
        if ph == Phase.ARM:
            if t - self.entered >= cfg.arm_time:
                self._goto(Phase.TAKEOFF, t, actions)
        elif ph == Phase.TAKEOFF:
            if np.linalg.norm(inp.p - self.hover_point) < 2 * cfg.hover_tolerance:
                self._goto(Phase.HOVER, t, actions)
            elif self._timed_out(t):
                self._landing(t, actions, events, False)
        elif ph == Phase.HOVER:
            if self._stable(inp, self.hover_point):
                if self.abort_pending:
                    self._landing(t, actions, events, False)
                else:
                    self._goto(Phase.DETECT, t, actions)
            elif self._timed_out(t):
                self._landing(t, actions, events, False)
        elif ph == Phase.DETECT:
            if t - self.entered >= cfg.detect_dwell:
                self._goto(Phase.SELECT, t, actions)
        elif ph == Phase.SELECT:
            sel = perception.select_target(self.map, inp.p, inp.R, self.camera, t)
            if sel.empty:
                self._landing(t, actions, events, False)
            else:
                self.target_id = sel.target_id
                self.current = GraspEvent(sel.target_id, t)
                self._event(t, f"select:{sel.target_id}", events)
                self.tracker = TrackerState(sel.target_id, None, False)
                self.frozen_target = perception.query_target(self.map, sel.target_id)
                # jaw opens before the first servo setpoint
                actions.append("open")
                self._goto(Phase.REACH, t, actions)
        elif ph == Phase.REACH:
            try:
                target = self._target()
            except perception.UnknownInstance:
                self._close_current(Outcome.ABORTED, t, events)
                self._goto(Phase.HOVER, t, actions)
                return
            wrist = wrist_position(inp.p, inp.R, self.arm_offset)
            if cfg.standoff <= 0 and np.linalg.norm(wrist - target) <= cfg.grasp_tolerance:
                self.hold = (inp.p + (target - wrist), math.atan2(target[1] - inp.p[1],
                                                                  target[0] - inp.p[0]))
                actions.append("close")
                self._goto(Phase.GRASP, t, actions)
                self.substep = "closing"
            elif cfg.standoff <= 0 and self._timed_out(t):
                self._close_current(Outcome.ABORTED, t, events)
                self.abort_pending = True
                actions.append("open")
                self._goto(Phase.HOVER, t, actions)
        elif ph == Phase.GRASP:
            self._advance_grasp(inp, actions, events)
        elif ph == Phase.DELIVERY:
            g = inp.gripper
            if g.dropped:
                self.current.outcome = Outcome.DROPPED
                self._event(t, f"drop:{self.current.fruit_id}", events)
                self._finish_target()
                self._goto(Phase.HOVER, t, actions)
            elif self._stable_delivery(inp):
                actions.append("release")
                self.current.t_delivered = t
                self._event(t, f"deliver:{self.current.fruit_id}", events)
                self._finish_target()
                self._goto(Phase.HOVER, t, actions)
            elif self._timed_out(t):
                self._landing(t, actions, events, False)
        elif ph == Phase.LANDING:
            if inp.p[2] < cfg.touchdown_height and abs(inp.v[2]) < 0.1:
                if self.ground_since is None:
                    self.ground_since = t
                if t - self.ground_since >= 0.5:
                    self._goto(Phase.DISARM, t, actions)
            else:
                self.ground_since = None
            if self.phase == Phase.LANDING and self._timed_out(t):
                self._goto(Phase.DISARM, t, actions)

    def _advance_grasp(self, inp, actions, events):
        t = inp.t
        g = inp.gripper
        if self.substep == "closing":
            if g.jaw == "closed" and g.outcome is not None:
                self._event(t, f"grasp:{g.outcome.value}:{self.current.fruit_id}", events)
                if g.outcome == Outcome.MISS:
                    self.current.outcome = Outcome.MISS
                    n = self.attempts.get(self.target_id, 0) + 1
                    self.attempts[self.target_id] = n
                    if n >= self.cfg.max_attempts:
                        perception.mark_removed(self.map, self.target_id)
                    self.current = None
                    self.target_id = None
                    actions.append("open")
                    self._goto(Phase.HOVER, t, actions)
                    return
                self.current.outcome = g.outcome
                self.current.t_grasped = t
                self.substep = "pulling"
                self.pull_start = inp.p.copy()
        elif self.substep == "pulling":
            travel = float(self.pull_start[0] - inp.p[0])
            if g.detached:
                self._goto(Phase.DELIVERY, t, actions)
                return
            if travel >= self.cfg.backward_travel:
                actions.append("detach")
        if self.phase == Phase.GRASP and self._timed_out(t):
            if self.current is not None and self.current.outcome is None:
                self._close_current(Outcome.ABORTED, t, events)
            self.abort_pending = True
            actions.append("open")
            self._goto(Phase.HOVER, t, actions)

    def _stable_delivery(self, inp):
        if np.linalg.norm(inp.p - self.delivery_point) < self.cfg.hover_tolerance:
            if self.stable_since is None:
                self.stable_since = inp.t
            return inp.t - self.stable_since >= self.cfg.delivery_dwell
        self.stable_since = None
        return False

    def _finish_target(self):
        try:
            perception.mark_removed(self.map, self.target_id)
        except perception.UnknownInstance:
            pass
        self.current = None
        self.target_id = None

    def _target(self):
        if self.cfg.open_loop:
            perception.query_target(self.map, self.target_id)
            return self.frozen_target
        return perception.query_target(self.map, self.target_id)

    def _setpoint(self, inp):
        ph = self.phase
        if ph in (Phase.ARM, Phase.DISARM):
            return Setpoint(np.array([inp.p[0], inp.p[1], 0.0]), np.zeros(3), yaw_of(inp.R)), ALL_POSITION
        if ph in (Phase.TAKEOFF, Phase.HOVER, Phase.DETECT, Phase.SELECT):
            return self._hover_sp(), ALL_POSITION
        if ph == Phase.REACH:
            try:
                target = self._target()
            except perception.UnknownInstance:
                return self._hover_sp(), ALL_POSITION
            return servo_setpoint(target, inp.p, inp.R, self.cfg, self.arm_offset)
        if ph == Phase.GRASP:
            p_hold, yaw = self.hold
            if self.substep == "pulling":
                v = np.array([-self.cfg.approach_speed, 0.0, 0.0])
                return Setpoint(p_hold, v, yaw), SERVO_MODES
            return Setpoint(p_hold, np.zeros(3), yaw), ALL_POSITION
        if ph == Phase.DELIVERY:
            return Setpoint(self.delivery_point.copy(), np.zeros(3), 0.0), ALL_POSITION
        if ph == Phase.LANDING:
            xy = self.landing_xy
            sp = Setpoint(np.array([xy[0], xy[1], 0.0]),
                          np.array([0.0, 0.0, -self.cfg.landing_speed]), yaw_of(inp.R))
            return sp, AxisModes(POSITION, POSITION, VELOCITY)
        raise AssertionError(ph)


def standoff_reference(target, cfg, arm_offset):
    """Vehicle position and yaw that put the wrist ``standoff`` metres in
    front of ``target`` while facing it along +x."""
    arm = np.asarray(arm_offset, dtype=float)
    ref = np.asarray(target, dtype=float) - np.array([cfg.standoff, 0.0, 0.0]) - rot_z(0.0) @ arm
    return ref, 0.0
