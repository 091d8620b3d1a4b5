"""Append-only run logs: line-delimited JSON records plus a flat CSV export."""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WALL_CLOCK_FIELDS = ("wall_clock",)
CSV_BASE = ["iteration", "waypoint", "pose_error_m"]


def to_plain(value):
    """JSON-ready copy: numpy values become builtins, non-finite floats become None."""
    if isinstance(value, dict):
        return {k: to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_plain(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else None
    return value


@dataclass
class RunLog:
    """Per-iteration records plus a run summary.

    Records carry a strictly increasing ``iteration`` index; ``append``
    refuses anything else.
    """

    scenario: str = ""
    records: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def append(self, record):
        it = record.get("iteration")
        if it is None or (self.records and it <= self.records[-1]["iteration"]):
            raise ValueError("run log records need a strictly increasing iteration index")
        self.records.append(to_plain(record))

    @property
    def success(self):
        return bool(self.summary.get("success", False))

    def lines(self, wall_clock=True):
        header = {"type": "header", "scenario": self.scenario}
        out = [header]
        for r in self.records:
            rec = {"type": "iteration", **r}
            if not wall_clock:
                for k in WALL_CLOCK_FIELDS:
                    rec.pop(k, None)
            out.append(rec)
        summ = {"type": "summary", **to_plain(self.summary)}
        if not wall_clock:
            summ.pop("wall_clock_total", None)
        out.append(summ)
        return [json.dumps(o, sort_keys=True) for o in out]

    def write_jsonl(self, path):
        Path(path).write_text("\n".join(self.lines()) + "\n")

    @classmethod
    def read_jsonl(cls, path):
        log = cls()
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{n}: not a JSON record ({exc.msg})") from None
            kind = obj.pop("type", None)
            if kind == "header":
                log.scenario = obj.get("scenario", "")
            elif kind == "iteration":
                log.append(obj)
            elif kind == "summary":
                log.summary = obj
        return log

    def csv_rows(self):
        m = max((len(r.get("f_perp") or []) for r in self.records), default=0)
        cols = CSV_BASE + [f"f_perp_{i}" for i in range(m)] + [f"f_par_{i}" for i in range(m)]
        cols += [f"cone_ratio_{i}" for i in range(m)] + ["trd_percent", "flags"]
        rows = []
        for r in self.records:
            row = {"iteration": r["iteration"], "waypoint": r.get("waypoint"), "pose_error_m": r.get("pose_error")}
            for key, name in (("f_perp", "f_perp"), ("f_par", "f_par"), ("cone_ratio", "cone_ratio")):
                for i, v in enumerate(r.get(key) or []):
                    row[f"{name}_{i}"] = v
            row["trd_percent"] = r.get("trd")
            row["flags"] = ";".join(r.get("flags") or [])
            rows.append(row)
        return cols, rows

    def write_csv(self, path):
        cols, rows = self.csv_rows()
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=cols)
            writer.writeheader()
            writer.writerows(rows)

    def waypoint_errors(self):
        """Final pose error per waypoint, recomputed from the logged poses."""
        last = {}
        for r in self.records:
            if r.get("observed_position") is not None and r.get("desired_position") is not None:
                last[r["waypoint"]] = float(np.linalg.norm(np.subtract(r["observed_position"], r["desired_position"])))
        return [last[k] for k in sorted(last)]
