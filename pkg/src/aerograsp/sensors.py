"""Simulated sensor streams generated from ground truth.

Every stream draws from its own ``numpy.random.Generator`` so that changing
one noise setting never perturbs the samples of another stream.
"""

import math
import zlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import E3, exp_so3, rot_to_euler

DEPTH_BOUND = 0.03


def stream_rng(seed, name):
    """Independent generator for the named stream of a scenario seed."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(name.encode())]))


@dataclass(frozen=True)
class ImuConfig:
    rate: float = 200.0
    accel_noise: float = 0.05
    gyro_noise: float = 0.002
    accel_bias: tuple = (0.0, 0.0, 0.0)
    gyro_bias: tuple = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SlamConfig:
    rate: float = 60.0
    pos_noise: float = 0.015
    angle_noise: float = math.radians(0.5)
    latency: float = 0.020
    dropout: float = 0.0


@dataclass(frozen=True)
class DepthConfig:
    rel_sigma: float = 0.01
    max_sigma: float = 0.015
    bound: float = DEPTH_BOUND


@dataclass(frozen=True)
class DetectorConfig:
    rate: float = 30.0
    p_detect: float = 0.95
    occlusion_angle: float = 0.04


@dataclass(frozen=True)
class TrackerConfig:
    p_fail: float = 0.02
    pixel_gate: float = 40.0
    reacquire_gate: float = 0.10


@dataclass(frozen=True)
class CameraModel:
    fov_h: float = math.radians(69.0)
    fov_v: float = math.radians(42.0)
    max_range: float = 3.0
    width: int = 640
    height: int = 480
    offset: tuple = (0.0, 0.0, 0.0)
    # body -> camera rotation; identity keeps the optical axis on body x
    mount_rotation: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        if not (0 < self.fov_h < math.pi and 0 < self.fov_v < math.pi):
            raise ValueError("field of view must lie in (0, pi)")

    @property
    def focal(self):
        return (self.width / 2) / math.tan(self.fov_h / 2)

    def pose(self, p, R):
        """World position and world<-camera rotation of the camera."""
        return p + R @ np.asarray(self.offset, dtype=float), R @ self.mount_rotation.T

    def to_camera(self, p, R, point):
        c, Rc = self.pose(p, R)
        return Rc.T @ (np.asarray(point, dtype=float) - c)

    def in_fov(self, q):
        """``q`` in camera axes (x forward, y left, z up)."""
        if q[0] <= 1e-6:
            return False
        if math.atan2(abs(q[1]), q[0]) > self.fov_h / 2:
            return False
        if math.atan2(abs(q[2]), q[0]) > self.fov_v / 2:
            return False
        return True

    def project(self, q):
        f = self.focal
        return np.array([self.width / 2 - f * q[1] / q[0], self.height / 2 - f * q[2] / q[0]])


@dataclass(frozen=True)
class ImuSample:
    accel: np.ndarray
    gyro: np.ndarray
    t: float


@dataclass(frozen=True)
class SlamPoseSample:
    p: np.ndarray
    yaw_pitch_roll: tuple
    t: float
    valid: bool = True
    R: np.ndarray = None


@dataclass(frozen=True)
class DepthSample:
    target_point: np.ndarray
    range_truth: float
    range_measured: float
    t: float


@dataclass(frozen=True)
class DetectionSample:
    fruit_id_truth: int
    centroid_3d: np.ndarray
    pixel_center: np.ndarray
    visible: bool
    t: float
    overlapped: bool = False


@dataclass
class TrackerState:
    target_id: int = None
    pixel: np.ndarray = None
    lost: bool = False
    centroid: np.ndarray = None
    failures: int = 0


def sample_imu(state, a_true_world, cfg, rng, g=9.81, omega=None):
    """Specific force and angular rate in body axes with bias and noise."""
    w = state.omega if omega is None else omega
    accel = state.R.T @ (np.asarray(a_true_world, dtype=float) + g * E3)
    accel = accel + np.asarray(cfg.accel_bias)
    gyro = np.asarray(w, dtype=float) + np.asarray(cfg.gyro_bias)
    if cfg.accel_noise > 0:
        accel = accel + rng.normal(0.0, cfg.accel_noise, 3)
    if cfg.gyro_noise > 0:
        gyro = gyro + rng.normal(0.0, cfg.gyro_noise, 3)
    return ImuSample(accel, gyro, state.t)


def sample_slam_pose(state, cfg, rng, t_now=None):
    """Noisy 6-DoF pose of ``state``.

    ``state`` is the ground truth at the measurement instant; the caller
    delivers the sample ``cfg.latency`` later (``t_now``). Attitude noise is
    applied as a body-frame rotation vector.
    """
    p = state.p.copy()
    R = state.R.copy()
    if cfg.pos_noise > 0:
        p = p + rng.normal(0.0, cfg.pos_noise, 3)
    if cfg.angle_noise > 0:
        R = R @ exp_so3(rng.normal(0.0, cfg.angle_noise, 3))
    valid = True
    if cfg.dropout > 0:
        valid = bool(rng.random() >= cfg.dropout)
    roll, pitch, yaw = rot_to_euler(R)
    return SlamPoseSample(p, (yaw, pitch, roll), state.t, valid, R)


def depth_sigma(distance, cfg):
    return min(cfg.rel_sigma * distance, cfg.max_sigma)


def truncated_normal(rng, sigma, bound):
    if sigma <= 0:
        return 0.0
    while True:
        n = rng.normal(0.0, sigma)
        if abs(n) <= bound:
            return n


def sample_depth(state, camera, target, rng, cfg=DepthConfig()):
    """Range to ``target`` with distance-proportional, truncated noise.

    Returns ``None`` when the target is outside the field of view.
    """
    q = camera.to_camera(state.p, state.R, target)
    if not camera.in_fov(q):
        return None
    d = float(np.linalg.norm(q))
    noise = truncated_normal(rng, depth_sigma(d, cfg), cfg.bound)
    return DepthSample(q, d, d + noise, state.t)


def sample_detections(state, camera, scene, rng, det_cfg=DetectorConfig(), depth_cfg=DepthConfig()):
    """Simulated fruit detector with depth back-projection.

    A fruit is suppressed when a nearer fruit lies within
    ``det_cfg.occlusion_angle`` of its line of sight; the nearer fruit's
    detection is then flagged as overlapped.
    """
    c, Rc = camera.pose(state.p, state.R)
    candidates = []
    for f in scene.fruits:
        if not f.attached:
            continue
        q = Rc.T @ (f.position - c)
        d = float(np.linalg.norm(q))
        if d > camera.max_range or not camera.in_fov(q):
            continue
        candidates.append((d, f.id, q, f))
    candidates.sort(key=lambda item: (item[0], item[1]))
    visible = []
    overlapped = set()
    for d, fid, q, f in candidates:
        u = q / d
        blocked = False
        for d2, fid2, q2, _ in visible:
            if np.dot(u, q2 / d2) >= math.cos(det_cfg.occlusion_angle):
                blocked = True
                overlapped.add(fid2)
                break
        if not blocked:
            visible.append((d, fid, q, f))
    detections = []
    for d, fid, q, f in visible:
        # draws happen for every visible fruit so the stream stays aligned
        hit = rng.random() < det_cfg.p_detect
        noise = truncated_normal(rng, depth_sigma(d, depth_cfg), depth_cfg.bound)
        if not hit:
            continue
        q_meas = q * ((d + noise) / d)
        centroid = c + Rc @ q_meas
        detections.append(DetectionSample(fid, centroid, camera.project(q), True,
                                          state.t, fid in overlapped))
    return detections


def track_target(prev, detections, rng, cfg=TrackerConfig(), predicted_pixel=None,
                 map_centroid=None):
    """Colour-tracker stand-in following the selected target.

    While locked, the detection nearest the predicted pixel (within
    ``pixel_gate``) is followed; overlapped blobs and random per-frame
    failures drop the lock. A lost tracker re-locks on a detection within
    ``reacquire_gate`` metres of the map centroid.
    """
    pixel = prev.pixel if predicted_pixel is None else predicted_pixel
    fail = cfg.p_fail > 0 and rng.random() < cfg.p_fail
    if prev.lost:
        if map_centroid is None:
            return TrackerState(prev.target_id, pixel, True, None, prev.failures)
        best = None
        for det in detections:
            dist = float(np.linalg.norm(det.centroid_3d - map_centroid))
            if dist <= cfg.reacquire_gate and (best is None or dist < best[0]):
                best = (dist, det)
        if best is None or fail or best[1].overlapped:
            return TrackerState(prev.target_id, pixel, True, None, prev.failures)
        det = best[1]
        return TrackerState(prev.target_id, det.pixel_center, False, det.centroid_3d, prev.failures)
    best = None
    if pixel is not None:
        for det in detections:
            dist = float(np.linalg.norm(det.pixel_center - pixel))
            if dist <= cfg.pixel_gate and (best is None or dist < best[0]):
                best = (dist, det)
    if best is None or fail or best[1].overlapped:
        return TrackerState(prev.target_id, pixel, True, None, prev.failures + 1)
    det = best[1]
    return TrackerState(prev.target_id, det.pixel_center, False, det.centroid_3d, prev.failures)
