"""Benchmark suites: paired TMAF/DA hover benches, the grasping grid and
the servoing table, each with pass/fail verdicts."""

import csv
import json
import os

import numpy as np

from .metrics import dumps, position_error
from .scenario import parse_scenario
from .sim import Simulation
from .telemetry import parse_lines

SUITES = ("fig6a_mass", "fig6a_battery", "fig6b_disturb", "grasp_tables", "servo_table")
MASSES = (2.5, 3.3, 4.1)
MASS_ERROR = 1.2           # true mass / mass assumed by DA
FRUIT_COUNTS = (2, 3, 6, 8)


def run(raw, seed=None):
    """Run a raw scenario dict; returns (parsed telemetry, report)."""
    sim = Simulation(parse_scenario(raw), seed).run()
    return parse_lines(sim.writer.lines), sim.report()


def _hover_pair(preset, mass, seed, extra=None):
    out = {}
    for kind in ("tmaf", "da"):
        veh = {"mass": mass}
        veh.update((extra or {}).get("vehicle", {}))
        raw = {"include_defaults": preset, "name": f"{preset}_{kind}_m{mass}", "seed": seed,
               "vehicle": veh,
               "control": {"kind": kind, "assumed_mass": mass / MASS_ERROR if preset == "hover_bench"
                           else mass}}
        out[kind] = run(raw)
    return out


def _verdict(name, value, threshold, ok):
    return {"check": name, "value": value, "threshold": threshold, "pass": bool(ok)}


def _error_trace(pair, path):
    """Per-figure plot data: position error norm of both controllers."""
    t = pair["tmaf"][0]["t"]
    e_t = np.linalg.norm(position_error(pair["tmaf"][0]), axis=1)
    e_d = np.linalg.norm(position_error(pair["da"][0]), axis=1)
    n = min(len(e_t), len(e_d))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "tmaf_error", "da_error"])
        for i in range(n):
            w.writerow([repr(float(t[i])), repr(float(e_t[i])), repr(float(e_d[i]))])


def fig6a_mass(seeds=10, out=None):
    reports, verdicts = [], []
    for seed in range(seeds):
        pair = _hover_pair("hover_bench", 3.4, seed)
        rt, rd = pair["tmaf"][1]["hover_rmse"], pair["da"][1]["hover_rmse"]
        reports += [pair["tmaf"][1], pair["da"][1]]
        verdicts.append(_verdict(f"seed {seed}: DA >= 3x TMAF, TMAF <= 0.05",
                                 [rt, rd], [0.05, 3.0], rt <= 0.05 and rd >= 3 * rt))
        if seed == 0 and out:
            _error_trace(pair, os.path.join(out, "fig6a_mass.csv"))
    for m in MASSES:
        pair = _hover_pair("hover_bench", m, 0)
        rt, rd = pair["tmaf"][1]["hover_rmse"], pair["da"][1]["hover_rmse"]
        reports += [pair["tmaf"][1], pair["da"][1]]
        verdicts.append(_verdict(f"mass {m}: DA >= 3x TMAF, TMAF <= 0.05", [rt, rd],
                                 [0.05, 3.0], rt <= 0.05 and rd >= 3 * rt))
    return reports, verdicts


def fig6a_battery(seeds=1, out=None):
    reports, verdicts = [], []
    for m in MASSES:
        for seed in range(seeds):
            pair = _hover_pair("battery_bench", m, seed)
            rt, rd = pair["tmaf"][1]["hover_rmse"], pair["da"][1]["hover_rmse"]
            reports += [pair["tmaf"][1], pair["da"][1]]
            verdicts.append(_verdict(f"mass {m} seed {seed}: DA >= 0.10, TMAF <= 0.05", [rt, rd],
                                     [0.05, 0.10], rt <= 0.05 and rd >= 0.10))
            if out and m == MASSES[1] and seed == 0:
                _error_trace(pair, os.path.join(out, "fig6a_battery.csv"))
    return reports, verdicts


def fig6b_disturb(seeds=1, out=None):
    reports, verdicts = [], []
    for m in MASSES:
        for seed in range(seeds):
            pair = _hover_pair("disturb_bench", m, seed)
            pt, pd = pair["tmaf"][1]["peak_offset"], pair["da"][1]["peak_offset"]
            reports += [pair["tmaf"][1], pair["da"][1]]
            verdicts.append(_verdict(f"mass {m} seed {seed}: DA peak >= 2x TMAF peak", [pt, pd],
                                     2.0, pt < pd and pd >= 2 * pt))
            if out and m == MASSES[1] and seed == 0:
                _error_trace(pair, os.path.join(out, "fig6b_disturb.csv"))
    return reports, verdicts


def mission_raw(n_fruits, seed, noiseless=False, name=None):
    return {"include_defaults": "mission", "name": name or f"mission_{n_fruits}", "seed": seed,
            "sensors": {"noiseless": noiseless}, "scene": {"random_fruits": n_fruits}}


def grasp_grid(counts=FRUIT_COUNTS, seeds=20, noiseless=False):
    """Exp-1 style grid; returns per-run reports."""
    reports = []
    for n in counts:
        for seed in range(seeds):
            reports.append(run(mission_raw(n, seed, noiseless))[1])
    return reports


def pooled(reports):
    """Pooled success rate, error rate and time per delivered instance."""
    attempts = sum(r["attempts"] for r in reports)
    succ = sum(r["successes"] for r in reports)
    drops = sum(r["drops"] for r in reports)
    times = [x for r in reports for x in r["delivery_times"]]
    return {"attempts": attempts,
            "success_rate": succ / attempts if attempts else None,
            "error_rate": drops / succ if succ else None,
            "avg_time": float(np.mean(times)) if times else None,
            "delivered": len(times),
            "illegal_transitions": sum(r["illegal_transitions"] for r in reports)}


def grasp_tables(seeds=20, out=None):
    reports, verdicts = [], []
    for n in FRUIT_COUNTS:
        rep = run(mission_raw(n, 0, noiseless=True))[1]
        reports.append(rep)
        verdicts.append(_verdict(f"noiseless {n} fruits: success 1, error 0",
                                 [rep["grasp_success_rate"], rep["error_rate"]], [1.0, 0.0],
                                 rep["grasp_success_rate"] == 1.0 and rep["error_rate"] == 0.0
                                 and rep["delivered"] == n))
    grid = grasp_grid(seeds=seeds)
    reports += grid
    rows = []
    for n in FRUIT_COUNTS:
        p = pooled([r for r in grid if r["name"] == f"mission_{n}"])
        rows.append({"fruits": n, **p})
    total = pooled(grid)
    verdicts.append(_verdict("nominal grid: overall success >= 0.66", total["success_rate"], 0.66,
                             (total["success_rate"] or 0) >= 0.66))
    verdicts.append(_verdict("nominal grid: time per instance in [3, 15] s", total["avg_time"],
                             [3.0, 15.0], total["avg_time"] is not None
                             and 3.0 <= total["avg_time"] <= 15.0))
    # Exp-3: five-fruit layouts from documented seeds
    for layout in range(5):
        rep = run(mission_raw(5, 100 + layout, name=f"layout_{layout}"))[1]
        reports.append(rep)
        rows.append({"layout": layout, **pooled([rep])})
    if out:
        with open(os.path.join(out, "grasp_tables.csv"), "w", newline="") as fh:
            keys = ["fruits", "layout", "attempts", "success_rate", "error_rate", "avg_time",
                    "delivered"]
            w = csv.DictWriter(fh, keys, extrasaction="ignore", lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow(r)
    return reports, verdicts


def servo_raw(seed, noiseless=False, speed=1.0, stationary=False):
    raw = {"include_defaults": "servo_bench", "seed": seed, "name": "servo",
           "sensors": {"noiseless": noiseless}}
    if stationary:
        raw["scene"] = {"motions": []}
        raw["metrics"] = {"window": [20.0, 40.0]}
    elif speed != 1.0:
        raw["scene"] = {"motions": [{"fruit_id": 0, "amplitude": [0.05, 0.1, 0.05],
                                     "period": 12.0 / speed, "start": 15.0}]}
    return raw


def servo_table(seeds=3, out=None):
    reports, verdicts = [], []
    means = []
    for seed in range(seeds):
        rep = run(servo_raw(seed))[1]
        reports.append(rep)
        sd = rep["servo_dev"]
        means.append(sd["mean"] + [sd["yaw_mean_deg"]])
        verdicts.append(_verdict(f"seed {seed}: axis means <= 0.05 m, yaw <= 5 deg",
                                 sd["mean"] + [sd["yaw_mean_deg"]], [0.05, 5.0],
                                 max(sd["mean"]) <= 0.05 and sd["yaw_mean_deg"] <= 5.0))
    rep = run(servo_raw(0, noiseless=True, stationary=True))[1]
    reports.append(rep)
    verdicts.append(_verdict("stationary noiseless: means < 1e-3 m", rep["servo_dev"]["mean"], 1e-3,
                             max(rep["servo_dev"]["mean"]) < 1e-3))
    slow = run(servo_raw(0))[1]["servo_dev"]["mean"]
    fast = run(servo_raw(0, speed=2.0))[1]["servo_dev"]["mean"]
    verdicts.append(_verdict("doubling target speed does not reduce deviation",
                             [sum(slow), sum(fast)], None, sum(fast) >= sum(slow)))
    if out:
        with open(os.path.join(out, "servo_table.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seed", "mean_x", "mean_y", "mean_z", "yaw_deg"])
            for seed, m in enumerate(means):
                w.writerow([seed] + [repr(float(v)) for v in m])
    return reports, verdicts


RUNNERS = {"fig6a_mass": fig6a_mass, "fig6a_battery": fig6a_battery,
           "fig6b_disturb": fig6b_disturb, "grasp_tables": grasp_tables,
           "servo_table": servo_table}


def bench_suite(name, out=None, seeds=None):
    """Run suite ``name``; returns ``(reports, verdicts)`` and, with ``out``,
    writes the plot CSV, ``reports.jsonl`` and ``verdicts.json`` there."""
    if name not in RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if out:
        os.makedirs(out, exist_ok=True)
    kw = {} if seeds is None else {"seeds": seeds}
    reports, verdicts = RUNNERS[name](out=out, **kw)
    illegal = sum(r["illegal_transitions"] for r in reports)
    verdicts.append(_verdict("no illegal phase transitions", illegal, 0, illegal == 0))
    if out:
        with open(os.path.join(out, "reports.jsonl"), "w") as fh:
            for r in reports:
                fh.write(json.dumps(r, sort_keys=True) + "\n")
        with open(os.path.join(out, "verdicts.json"), "w") as fh:
            fh.write(dumps({"suite": name, "verdicts": verdicts}))
    return reports, verdicts
