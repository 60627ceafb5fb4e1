"""Evaluation metrics computed from grasp events and telemetry."""

import json
import math

import numpy as np

from ..autonomy import SUCCESS, GraspEvent, Outcome, illegal_transitions
from .telemetry import SCHEMA_VERSION

TRIALS = {Outcome.FULL, Outcome.PARTIAL, Outcome.MISS, Outcome.DROPPED}


def compute_success_rate(events):
    """Gripped (fully or partially) over grasp trials; None without trials.

    A fruit dropped in transit was gripped, so it counts as a success here
    and as an error in :func:`compute_error_rate`.
    """
    trials = [e for e in events if e.outcome in TRIALS]
    if not trials:
        return None
    return sum(e.outcome in SUCCESS for e in trials) / len(trials)


def compute_avg_time(events):
    """Mean selection-to-delivery time over delivered fruit."""
    times = [e.t_delivered - e.t_selected for e in events if e.t_delivered is not None]
    if not times:
        return None
    return float(np.mean(times))


def compute_error_rate(events):
    """Drops in transit over gripped fruit; None when nothing was gripped."""
    gripped = [e for e in events if e.outcome in SUCCESS]
    if not gripped:
        return None
    return sum(e.outcome == Outcome.DROPPED for e in gripped) / len(gripped)


def _window_mask(t, window):
    t0, t1 = window
    mask = (t >= t0) & (t <= t1)
    if not mask.any():
        raise ValueError(f"empty metrics window {window}")
    return mask


def position_error(tel):
    return np.column_stack([tel["x"] - tel["ref_x"], tel["y"] - tel["ref_y"],
                            tel["z"] - tel["ref_z"]])


def compute_hover_rmse(tel, window):
    """RMS of the truth-to-setpoint distance over ``window``."""
    err = position_error(tel)[_window_mask(tel["t"], window)]
    return float(math.sqrt(np.mean(np.sum(err * err, axis=1))))


def compute_peak_offset(tel, window):
    err = position_error(tel)[_window_mask(tel["t"], window)]
    return float(np.max(np.linalg.norm(err, axis=1)))


def compute_servo_deviation(tel, window=None):
    """Per-axis mean/std of |deviation| from the standoff reference and the
    yaw error in degrees."""
    t = tel["t"]
    mask = np.ones(len(t), bool) if window is None else _window_mask(t, window)
    mask &= np.array([p == "ReachTarget" for p in tel["phase"]])
    if not mask.any():
        raise ValueError("no servoing samples in window")
    dev = np.abs(position_error(tel)[mask])
    yaw = np.degrees(np.abs(np.angle(np.exp(1j * (tel["yaw"] - tel["ref_yaw"])))))[mask]
    return {"mean": [float(x) for x in dev.mean(axis=0)],
            "std": [float(x) for x in dev.std(axis=0)],
            "yaw_mean_deg": float(yaw.mean()), "yaw_std_deg": float(yaw.std())}


def events_from_telemetry(tel):
    """Rebuild GraspEvents from the event column."""
    out = []
    current = None
    for t, field in zip(tel["t"], tel["event"]):
        if not field:
            continue
        for ev in field.split(";"):
            parts = ev.split(":")
            kind = parts[0]
            if kind == "select":
                current = GraspEvent(int(parts[1]), float(t))
                out.append(current)
            elif current is None:
                continue
            elif kind in ("grasp", "abort"):
                current.outcome = Outcome(parts[1])
                if current.outcome in SUCCESS:
                    current.t_grasped = float(t)
                else:
                    current = None
            elif kind == "deliver":
                current.t_delivered = float(t)
                current = None
            elif kind == "drop":
                current.outcome = Outcome.DROPPED
                current = None
    return out


def event_log(tel):
    return [[float(t), f] for t, f in zip(tel["t"], tel["event"]) if f]


def phase_log(tel):
    log = []
    for t, p in zip(tel["t"], tel["phase"]):
        if not log or log[-1][1] != p:
            log.append([float(t), p])
    return log


def _clean(x):
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, list):
        return [_clean(v) for v in x]
    return x


def metrics_report(tel):
    """MetricsReport as a plain dict; every input comes from ``tel``."""
    meta = tel.meta
    mw = meta.get("metrics", {})
    events = events_from_telemetry(tel)
    phases = phase_log(tel)
    rep = {
        "schema_version": SCHEMA_VERSION,
        "name": meta.get("name"),
        "experiment": meta.get("experiment"),
        "controller": meta.get("controller"),
        "seed": meta.get("seed"),
        "grasp_success_rate": compute_success_rate(events),
        "avg_time_per_instance": compute_avg_time(events),
        "error_rate": compute_error_rate(events),
        "attempts": sum(e.outcome in TRIALS for e in events),
        "delivered": sum(e.t_delivered is not None for e in events),
        "selected": len(events),
        "successes": sum(e.outcome in SUCCESS for e in events),
        "drops": sum(e.outcome == Outcome.DROPPED for e in events),
        "delivery_times": [e.t_delivered - e.t_selected for e in events
                           if e.t_delivered is not None],
        "hover_rmse": None,
        "peak_offset": None,
        "servo_dev": None,
        "max_abs_pitch_deg": float(np.degrees(np.max(np.abs(tel["pitch"])))) if len(tel) else None,
        "final_phase": tel["phase"][-1] if len(tel) else None,
        "end_time": float(tel["t"][-1]) if len(tel) else None,
        "events": event_log(tel),
        "phase_log": phases,
        "illegal_transitions": len(illegal_transitions([p for _, p in phases])),
        "aborted": any("nan_abort" in f for f in tel["event"]),
    }
    if mw.get("window") is not None:
        if meta.get("experiment") == "servo_bench":
            rep["servo_dev"] = compute_servo_deviation(tel, mw["window"])
        else:
            rep["hover_rmse"] = compute_hover_rmse(tel, mw["window"])
    if mw.get("peak_window") is not None:
        rep["peak_offset"] = compute_peak_offset(tel, mw["peak_window"])
    return _clean(rep)


def dumps(report):
    return json.dumps(report, sort_keys=True, indent=1) + "\n"
