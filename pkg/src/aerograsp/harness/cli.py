"""Command-line entry point.

Exit codes: 0 pass, 1 acceptance failure, 2 configuration error.
``AEROGRASP_OUT`` overrides the default output directory.
"""

import argparse
import json
import logging
import os
import sys

from . import bench
from .metrics import dumps, metrics_report
from .scenario import ScenarioError, json_schema, load_scenario
from .sim import Simulation
from .telemetry import read_telemetry

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
OUT_ENV = "AEROGRASP_OUT"


def _out_dir(arg, default):
    out = arg or os.environ.get(OUT_ENV) or default
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args):
    cfg = load_scenario(args.scenario)
    out = _out_dir(args.out, "out")
    sim = Simulation(cfg, args.seed, os.path.join(out, "telemetry.csv")).run()
    report = sim.report()
    with open(os.path.join(out, "metrics.json"), "w") as fh:
        fh.write(dumps(report))
    if hasattr(sim.exec, "map"):
        with open(os.path.join(out, "map.jsonl"), "w") as fh:
            fh.write(sim.exec.map.dump_jsonl())
    print(f"{cfg.name}: seed {sim.seed}, {report['end_time']} s, final phase "
          f"{report['final_phase']}, output in {out}")
    failed = report["aborted"] or report["illegal_transitions"] > 0
    return EXIT_FAIL if failed else EXIT_OK


def cmd_bench(args):
    out = _out_dir(args.out, os.path.join("out", args.suite))
    _, verdicts = bench.bench_suite(args.suite, out, args.seeds)
    for v in verdicts:
        print(f"{'PASS' if v['pass'] else 'FAIL'}  {v['check']}  value={v['value']}")
    return EXIT_OK if all(v["pass"] for v in verdicts) else EXIT_FAIL


def cmd_validate(args):
    cfg = load_scenario(args.scenario)
    print(f"{args.scenario}: valid ({cfg.experiment}, seed {cfg.seed})")
    return EXIT_OK


def cmd_replay(args):
    try:
        tel = read_telemetry(args.telemetry)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    text = dumps(metrics_report(tel))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_schema(args):
    print(json.dumps(json_schema(), indent=1, sort_keys=True))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="aerograsp", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    r = sub.add_parser("run", help="run one scenario")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=None, help="overrides the scenario seed")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bench", help="run a benchmark suite")
    b.add_argument("--suite", required=True, choices=bench.SUITES)
    b.add_argument("--out", default=None)
    b.add_argument("--seeds", type=int, default=None, help="seeds per cell (suite default)")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("validate", help="check a scenario file against the schema")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("replay-metrics", help="recompute metrics from a telemetry file")
    m.add_argument("--telemetry", required=True)
    m.add_argument("--out", default=None)
    m.set_defaults(func=cmd_replay)

    s = sub.add_parser("schema", help="print the scenario JSON schema")
    s.set_defaults(func=cmd_schema)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ScenarioError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
