"""Harvesting scene: fruits on a vertical trellis region, the gripper
geometry and the external-force schedule."""

from dataclasses import dataclass, field, replace

import numpy as np

REGION_BASE = 0.80
REGION_WIDTH = 2.20
REGION_HEIGHT = 0.70
REGION_DISTANCE = 1.8
REGION_DEPTH = 0.10  # allowed +-x spread of fruit centres about the trellis plane
DETACH_DISTANCE = 0.15
MIN_RADIUS, MAX_RADIUS = 0.03, 0.06


class SceneError(ValueError):
    pass


@dataclass
class FruitTarget:
    id: int
    position: np.ndarray
    radius: float = 0.06
    mass: float = 0.300
    attached: bool = True
    detach_distance: float = DETACH_DISTANCE
    gripped: bool = False


@dataclass(frozen=True)
class Region:
    """Axis-aligned harvesting region on the plane x = ``origin[0]``.

    ``origin`` is the lower-right corner (min y, base height); width spans
    +y and height spans +z.
    """
    origin: tuple = (REGION_DISTANCE, -REGION_WIDTH / 2, REGION_BASE)
    width: float = REGION_WIDTH
    height: float = REGION_HEIGHT
    depth: float = REGION_DEPTH

    def contains(self, pos, tol=1e-9):
        x0, y0, z0 = self.origin
        return (abs(pos[0] - x0) <= self.depth + tol
                and y0 - tol <= pos[1] <= y0 + self.width + tol
                and z0 - tol <= pos[2] <= z0 + self.height + tol)


@dataclass(frozen=True)
class DisturbanceEvent:
    start_time: float
    duration: float
    force: tuple

    def __post_init__(self):
        if self.duration <= 0:
            raise SceneError("disturbance duration must be positive")


@dataclass(frozen=True)
class GripperGeometry:
    arm_offset: tuple = (0.84, 0.0, -0.15)
    jaw_open_radius: float = 0.08
    jaw_close_time: float = 0.5


@dataclass(frozen=True)
class TargetMotion:
    """Sinusoidal motion of a fruit, e.g. a target held on a stick."""
    fruit_id: int
    amplitude: tuple
    period: float
    start_time: float = 0.0

    def offset(self, t):
        s = np.sin(2.0 * np.pi * max(0.0, t - self.start_time) / self.period)
        return np.asarray(self.amplitude, dtype=float) * s


@dataclass
class HarvestScene:
    fruits: list
    region: Region = field(default_factory=Region)
    takeoff_point: np.ndarray = field(default_factory=lambda: np.zeros(3))
    delivery_point: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    gripper: GripperGeometry = field(default_factory=GripperGeometry)
    disturbances: list = field(default_factory=list)
    motions: list = field(default_factory=list)

    def fruit(self, fruit_id):
        for f in self.fruits:
            if f.id == fruit_id:
                return f
        raise KeyError(f"unknown fruit id {fruit_id}")

    def attached_fruits(self):
        return [f for f in self.fruits if f.attached]

    def apply_motion(self, t, base_positions):
        for m in self.motions:
            f = self.fruit(m.fruit_id)
            f.position = base_positions[m.fruit_id] + m.offset(t)


def _validate_fruit(region, pos, radius, mass, check_region=True):
    if not MIN_RADIUS <= radius <= MAX_RADIUS:
        raise SceneError(f"fruit radius {radius} outside [{MIN_RADIUS}, {MAX_RADIUS}] m")
    if mass <= 0:
        raise SceneError("fruit mass must be positive")
    if check_region and not region.contains(pos):
        raise SceneError(f"fruit at {list(pos)} lies outside the harvesting region")


def random_fruit_positions(n, rng, region=None, radius=0.06, max_tries=10000):
    """Uniform placement inside ``region`` keeping 2.5 radii between centres."""
    region = region or Region()
    x0, y0, z0 = region.origin
    min_sep = 2.5 * radius
    placed = []
    tries = 0
    while len(placed) < n:
        tries += 1
        if tries > max_tries:
            raise SceneError(f"cannot place {n} fruits with separation {min_sep} m")
        cand = np.array([x0,
                         rng.uniform(y0 + radius, y0 + region.width - radius),
                         rng.uniform(z0 + radius, z0 + region.height - radius)])
        if all(np.linalg.norm(cand - q) >= min_sep for q in placed):
            placed.append(cand)
    return placed


def build_scene(config, rng=None):
    """Construct the scene from a ``SceneConfig``-like object.

    Fruit placement comes from explicit positions, or from ``random_fruits``
    drawn with ``rng`` (required in that case).
    """
    region = Region(tuple(config.region.origin), config.region.width,
                    config.region.height, config.region.depth)
    fruits = []
    for i, fc in enumerate(config.fruits):
        pos = np.asarray(fc.pos, dtype=float)
        _validate_fruit(region, pos, fc.radius, fc.mass)
        fruits.append(FruitTarget(i, pos, float(fc.radius), float(fc.mass),
                                  detach_distance=float(fc.detach_distance)))
    if config.random_fruits:
        if rng is None:
            raise SceneError("random fruit placement needs an rng")
        for pos in random_fruit_positions(config.random_fruits, rng, region,
                                          config.random_radius):
            fruits.append(FruitTarget(len(fruits), pos, float(config.random_radius),
                                      float(config.random_mass)))
    g = config.gripper
    gripper = GripperGeometry(tuple(g.arm_offset), g.jaw_open_radius, g.jaw_close_time)
    disturbances = [DisturbanceEvent(d.start, d.duration, tuple(d.force))
                    for d in config.disturbances]
    motions = [TargetMotion(m.fruit_id, tuple(m.amplitude), m.period, m.start)
               for m in config.motions]
    takeoff = np.asarray(config.takeoff_point, dtype=float)
    delivery = (np.asarray(config.delivery_point, dtype=float)
                if config.delivery_point is not None
                else takeoff + np.array([0.0, 0.0, config.hover_altitude]))
    return HarvestScene(fruits, region, takeoff, delivery, gripper, disturbances, motions)


def active_disturbance(schedule, t):
    """Sum of the forces of all events active at time ``t``."""
    if t < 0:
        raise ValueError("time must be non-negative")
    total = np.zeros(3)
    for ev in schedule:
        if ev.start_time <= t <= ev.start_time + ev.duration:
            total = total + np.asarray(ev.force, dtype=float)
    return total


def detach_fruit(scene, fruit_id, backward_travel):
    """Pull a gripped fruit off its stem.

    Returns the (mutated) scene and whether the pull separated the fruit;
    the fruit detaches once ``backward_travel`` reaches its detach distance.
    """
    fruit = scene.fruit(fruit_id)
    if not fruit.gripped:
        raise SceneError(f"fruit {fruit_id} is not gripped")
    if not fruit.attached:
        return scene, True
    detached = backward_travel >= fruit.detach_distance
    if detached:
        fruit.attached = False
    return scene, detached


def copy_scene(scene):
    fruits = [replace(f, position=f.position.copy()) for f in scene.fruits]
    return replace(scene, fruits=fruits, takeoff_point=scene.takeoff_point.copy(),
                   delivery_point=scene.delivery_point.copy(),
                   disturbances=list(scene.disturbances), motions=list(scene.motions))
