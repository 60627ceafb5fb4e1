"""Persistent 3D instance map of detected fruit and target selection.

Servoing reads target positions from this map rather than from the raw
tracker, so a tracker dropout does not interrupt the approach.
"""

import json
from dataclasses import dataclass, field

import numpy as np

WINDOW = 20


class UnknownInstance(KeyError):
    pass


@dataclass
class Instance:
    id: int
    centroid: np.ndarray
    obs_count: int = 1
    last_seen: float = 0.0
    grasped_or_removed: bool = False


@dataclass
class InstanceMap:
    instances: dict = field(default_factory=dict)
    assoc_gate: float = 0.07
    next_id: int = 0
    window: int = WINDOW

    def live(self):
        return [inst for _, inst in sorted(self.instances.items()) if not inst.grasped_or_removed]

    def dump_jsonl(self):
        lines = []
        for _, inst in sorted(self.instances.items()):
            lines.append(json.dumps({"id": inst.id, "centroid": [float(c) for c in inst.centroid],
                                     "obs_count": inst.obs_count,
                                     "removed": inst.grasped_or_removed}))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass(frozen=True)
class TargetSelection:
    target_id: int = None
    selected_at: float = 0.0

    @property
    def empty(self):
        return self.target_id is None


def _associate(imap, x):
    best_id, best_d = None, None
    for inst in imap.live():
        d = float(np.linalg.norm(inst.centroid - x))
        # live() is id-ordered, so strict < keeps the lowest id on ties
        if d <= imap.assoc_gate and (best_d is None or d < best_d):
            best_id, best_d = inst.id, d
    return best_id


def update_map(imap, detections, t):
    """Fold one frame of detected centroids into the map.

    Detections are processed in lexicographic order so the result does not
    depend on the order the sensor emitted them. Each joins the nearest live
    instance within ``assoc_gate`` or starts a new one. Centroids follow a
    running mean over the first ``window`` observations and an exponential
    average with weight ``1/window`` afterwards.
    """
    pts = [np.asarray(d, dtype=float) for d in detections]
    for x in pts:
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite detection centroid")
    pts.sort(key=lambda x: tuple(x))
    touched = []
    for x in pts:
        iid = _associate(imap, x)
        if iid is None:
            iid = imap.next_id
            imap.next_id += 1
            imap.instances[iid] = Instance(iid, x.copy(), 1, t)
        else:
            inst = imap.instances[iid]
            inst.obs_count += 1
            n = min(inst.obs_count, imap.window)
            inst.centroid = inst.centroid + (x - inst.centroid) / n
            inst.last_seen = t
        touched.append(iid)
    return imap


def in_frustum(camera, p, R, point):
    q = camera.to_camera(p, R, point)
    return camera.in_fov(q) and float(np.linalg.norm(q)) <= camera.max_range


def select_target(imap, uav_position, R, camera, t=0.0):
    """Nearest live instance inside the camera frustum (lowest id on ties)."""
    best = None
    for inst in imap.live():
        if not in_frustum(camera, uav_position, R, inst.centroid):
            continue
        d = float(np.linalg.norm(inst.centroid - uav_position))
        if best is None or d < best[0]:
            best = (d, inst.id)
    if best is None:
        return TargetSelection(None, t)
    return TargetSelection(best[1], t)


def query_target(imap, target_id):
    inst = imap.instances.get(target_id)
    if inst is None or inst.grasped_or_removed:
        raise UnknownInstance(target_id)
    return inst.centroid.copy()


def mark_removed(imap, target_id):
    inst = imap.instances.get(target_id)
    if inst is None or inst.grasped_or_removed:
        raise UnknownInstance(target_id)
    inst.grasped_or_removed = True
    return imap
