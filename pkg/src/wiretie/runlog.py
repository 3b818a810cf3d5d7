"""Run log records and their on-disk formats.

Structured log (``run.ndjson``): one JSON object per line. The first line is
a header (``kind: "header"``, carrying ``schema``), then one ``kind: "tick"``
object per simulation tick with that tick's events embedded, then a single
``kind: "summary"`` line.

Trajectory CSV (``trajectories.csv``): columns ``tick,time,id,true_x,true_y,
true_z,est_x,est_y,est_z``; one row per tick for each anchor and one for the
robot (``id = robot``). Missing estimates are left empty.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

SCHEMA = "wiretie.runlog"
SCHEMA_VERSION = 1
CSV_COLUMNS = ["tick", "time", "id", "true_x", "true_y", "true_z", "est_x", "est_y", "est_z"]

EVENT_TYPES = ("takeoff", "waypoint_reached", "tie_verified", "tie_failed", "tension_applied",
               "phase_change", "gate_rejected", "proximity", "drive_step", "phase_timeout")


class LogIOError(OSError):
    pass


@dataclass
class Event:
    tick: int
    time: float
    type: str
    data: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"tick": self.tick, "time": self.time, "type": self.type, "data": self.data}


@dataclass
class RunLog:
    header: dict[str, Any] = field(default_factory=dict)
    ticks: list[dict[str, Any]] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)

    @property
    def events(self) -> list[Event]:
        out = []
        for rec in self.ticks:
            for e in rec.get("events", []):
                out.append(Event(e["tick"], e["time"], e["type"], e.get("data", {})))
        return out

    def events_of(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.type == kind]

    @property
    def completed(self) -> bool:
        return bool(self.summary.get("completed", False))

    def to_ndjson(self) -> str:
        lines = [json.dumps({"kind": "header", "schema": SCHEMA, "schema_version": SCHEMA_VERSION,
                             **self.header}, sort_keys=True)]
        lines += [json.dumps({"kind": "tick", **rec}, sort_keys=True) for rec in self.ticks]
        lines.append(json.dumps({"kind": "summary", **self.summary}, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_ndjson(cls, text: str) -> "RunLog":
        log = cls()
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("kind", None)
            if kind == "header":
                if obj.pop("schema", None) != SCHEMA:
                    raise ValueError(f"line {n}: not a {SCHEMA} file")
                version = obj.pop("schema_version", None)
                if version != SCHEMA_VERSION:
                    raise ValueError(f"line {n}: unsupported schema version {version}")
                log.header = obj
            elif kind == "tick":
                log.ticks.append(obj)
            elif kind == "summary":
                log.summary = obj
            else:
                raise ValueError(f"line {n}: unknown record kind {kind!r}")
        return log

    def csv_rows(self) -> list[list[Any]]:
        rows = []
        for rec in self.ticks:
            for a in rec["anchors"]:
                est = a.get("est_pos") or ["", "", ""]
                rows.append([rec["tick"], rec["time"], a["id"], *a["true_pos"], *est])
            rows.append([rec["tick"], rec["time"], "robot", *rec["robot"]["pos"], *rec["robot"]["pos"]])
        return rows

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        w.writerows(self.csv_rows())
        return buf.getvalue()


def read_log(path) -> RunLog:
    path = Path(path)
    try:
        return RunLog.from_ndjson(path.read_text())
    except OSError as exc:
        raise LogIOError(f"cannot read run log {path}: {exc}") from exc


def export_log(log: RunLog, path) -> tuple[Path, Path]:
    """Write ``run.ndjson`` and ``trajectories.csv`` into directory ``path``."""
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        structured = out / "run.ndjson"
        structured.write_text(log.to_ndjson())
        table = out / "trajectories.csv"
        table.write_text(log.to_csv())
    except OSError as exc:
        raise LogIOError(f"cannot write run log to {out}: {exc}") from exc
    return structured, table
