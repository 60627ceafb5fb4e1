"""Telemetry CSV: one JSON metadata comment line, a header, 100 Hz rows.

Floats are written with ``repr`` so a reader recovers the exact values.
"""

import json

import numpy as np

SCHEMA_VERSION = 1

COLUMNS = (
    "t", "phase",
    "x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz",
    "est_x", "est_y", "est_z", "est_roll", "est_pitch", "est_yaw",
    "ref_x", "ref_y", "ref_z", "ref_yaw",
    "cmd_thrust", "cmd_roll", "cmd_pitch", "cmd_yaw",
    "thrust_eff", "target_id", "tracker_lost", "jaw", "payload_mass", "event",
)
TEXT_COLUMNS = {"phase", "jaw", "event"}
INT_COLUMNS = {"target_id", "tracker_lost"}


def _fmt(v):
    if isinstance(v, str):
        return v
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def format_row(values):
    if len(values) != len(COLUMNS):
        raise ValueError("telemetry row has the wrong number of fields")
    return ",".join(_fmt(v) for v in values)


class TelemetryWriter:
    """Collects rows in memory and, with ``path``, streams them to disk."""

    def __init__(self, meta, path=None):
        self.meta = dict(meta, schema_version=SCHEMA_VERSION)
        self.lines = ["# " + json.dumps(self.meta, sort_keys=True), ",".join(COLUMNS)]
        self._last_t = -np.inf
        self._fh = None
        if path is not None:
            self._fh = open(path, "w", newline="\n")
            self._fh.write("\n".join(self.lines) + "\n")

    def write(self, values):
        t = float(values[0])
        if not t > self._last_t:
            raise ValueError("telemetry timestamps must increase strictly")
        self._last_t = t
        line = format_row(values)
        self.lines.append(line)
        if self._fh is not None:
            self._fh.write(line + "\n")

    def close(self):
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def text(self):
        return "\n".join(self.lines) + "\n"


class Telemetry:
    """Parsed telemetry: metadata plus one numpy array or list per column."""

    def __init__(self, meta, columns):
        self.meta = meta
        self.columns = columns

    def __getitem__(self, name):
        return self.columns[name]

    def __len__(self):
        return len(self.columns["t"])


def parse_lines(lines):
    lines = [ln for ln in lines if ln.strip()]
    if not lines or not lines[0].startswith("# "):
        raise ValueError("telemetry is missing its metadata line")
    meta = json.loads(lines[0][2:])
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported telemetry schema {meta.get('schema_version')}")
    header = lines[1].split(",")
    if tuple(header) != COLUMNS:
        raise ValueError("unexpected telemetry columns")
    raw = {c: [] for c in COLUMNS}
    for ln in lines[2:]:
        parts = ln.split(",")
        if len(parts) != len(COLUMNS):
            raise ValueError(f"malformed telemetry row: {ln!r}")
        for c, v in zip(COLUMNS, parts):
            raw[c].append(v)
    cols = {}
    for c in COLUMNS:
        if c in TEXT_COLUMNS:
            cols[c] = raw[c]
        elif c in INT_COLUMNS:
            cols[c] = np.array([int(v) if v else -1 for v in raw[c]], dtype=int)
        else:
            cols[c] = np.array([float(v) for v in raw[c]], dtype=float)
    return Telemetry(meta, cols)


def read_telemetry(path):
    with open(path) as fh:
        return parse_lines(fh.read().splitlines())
