"""CSV output and run manifests.

Every CSV has a header row, numbers in 17 significant digits, optional
``#`` comment lines, and a final ``# manifest: <file>`` line naming the JSON
manifest written next to it.  CSV content never contains timestamps, so
identical parameters give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

OUT_ENV = "QSILO_OUT"


def default_out_dir() -> Path:
    return Path(os.environ.get(OUT_ENV, "."))


def fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return "%.17g" % x
    return str(x)


class RunManifest:
    """Collects parameters and output files of one command invocation."""

    def __init__(self, command: str, params: dict, out_dir: Path, seed=None):
        from . import __version__

        self.command = command
        self.params = {k: (str(v) if isinstance(v, Path) else v) for k, v in params.items()}
        self.seed = seed
        self.version = __version__
        self.out_dir = Path(out_dir)
        self.started = datetime.now(timezone.utc).isoformat()
        self.finished = None
        self.outputs = []

    @property
    def path(self) -> Path:
        return self.out_dir / f"{self.command}.manifest.json"

    def write_csv(self, name: str, header, rows, comments=()) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        path = self.out_dir / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([fmt(x) for x in row])
            for c in comments:
                fh.write(f"# {c}\n")
            fh.write(f"# manifest: {self.path.name}\n")
        self.outputs.append(path.name)
        return path

    def close(self) -> Path:
        self.finished = datetime.now(timezone.utc).isoformat()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        doc = {
            "command": self.command,
            "params": self.params,
            "seed": self.seed,
            "version": self.version,
            "started": self.started,
            "finished": self.finished,
            "outputs": self.outputs,
        }
        self.path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return self.path


def read_csv(path):
    """Header and data rows of a CSV written here (comment lines dropped)."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], rows[1:]
