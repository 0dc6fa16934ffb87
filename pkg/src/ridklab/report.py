"""Structured experiment records and their on-disk forms."""
import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

from .fields import atomic_write


def _clean(value):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if hasattr(value, "item") and not isinstance(value, (str, bytes)):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    rows: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)
    figures: list = field(default_factory=list)
    completed: bool = True

    @property
    def passed(self):
        return self.completed and all(self.flags.values())

    def summary(self):
        return _clean(
            {
                "kind": self.kind,
                "config": self.config,
                "fits": self.fits,
                "oracle": self.oracle,
                "flags": self.flags,
                "passed": self.passed,
                "completed": self.completed,
                "row_count": len(self.rows),
            }
        )

    def rows_csv(self):
        return rows_to_csv(self.rows)


def rows_to_csv(rows, columns=None):
    if not rows:
        return ""
    columns = columns or list(rows[0].keys())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_format(row.get(c, "")) for c in columns])
    return buf.getvalue()


def _format(v):
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):
        return _format(v.item())
    return v


def write_report(report, out):
    os.makedirs(out, exist_ok=True)
    atomic_write(os.path.join(out, f"{report.kind}.csv"), report.rows_csv(), mode="w")
    text = json.dumps(report.summary(), indent=2, sort_keys=True) + "\n"
    atomic_write(os.path.join(out, "summary.json"), text, mode="w")


def emit_plotdata(report, out):
    """One (x, y, yerr) CSV per figure plus manifest.json describing axes and references."""
    os.makedirs(out, exist_ok=True)
    manifest = {"kind": report.kind, "figures": []}
    for fig in report.figures:
        name = fig["name"]
        rows = [{"x": x, "y": y, "yerr": e} for x, y, e in zip(fig["x"], fig["y"], fig["yerr"])]
        path = f"plot_{name}.csv"
        atomic_write(os.path.join(out, path), rows_to_csv(rows, ["x", "y", "yerr"]), mode="w")
        entry = {k: v for k, v in fig.items() if k not in ("x", "y", "yerr")}
        entry["file"] = path
        manifest["figures"].append(_clean(entry))
    atomic_write(os.path.join(out, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n", mode="w")
    return manifest
