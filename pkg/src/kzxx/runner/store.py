"""Record store: append-only CSV files per record kind plus a JSON manifest."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

from ..records import CorrRecord, EnergyRecord, ErrorRecord, FitRecord, columns

KINDS = {"corr": CorrRecord, "energy": EnergyRecord, "error": ErrorRecord, "fit": FitRecord}
MANIFEST = "manifest.json"


def _fmt(v):
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def _parse(cls, row):
    out = {}
    for f in cls.__dataclass_fields__.values():
        v = row[f.name]
        out[f.name] = v if f.type in ("str", str) else (int(v) if f.type in ("int", int) else float(v))
    return cls(**out)


class Store:
    def __init__(self, root):
        self.root = Path(root)

    def path(self, kind: str) -> Path:
        return self.root / f"{kind}.csv"

    def append(self, kind: str, records) -> int:
        cls = KINDS[kind]
        records = list(records)
        if not records:
            return 0
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.path(kind)
        new = not p.exists()
        with open(p, "a", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            if new:
                w.writerow(columns(cls))
            for r in records:
                w.writerow([_fmt(getattr(r, c)) for c in columns(cls)])
        return len(records)

    def count(self, kind: str) -> int:
        p = self.path(kind)
        if not p.exists():
            return 0
        with open(p) as f:
            return sum(1 for _ in f) - 1

    def write(self, kind: str, records) -> None:
        """Replace a derived table (fits) wholesale."""
        p = self.path(kind)
        if p.exists():
            p.unlink()
        if not self.append(kind, records):
            self.root.mkdir(parents=True, exist_ok=True)
            p.write_text(",".join(columns(KINDS[kind])) + "\n")

    def read(self, kind: str) -> list:
        p = self.path(kind)
        if not p.exists():
            return []
        cls = KINDS[kind]
        with open(p, newline="") as f:
            return [_parse(cls, row) for row in csv.DictReader(f)]

    def manifest(self) -> dict:
        p = self.root / MANIFEST
        if not p.exists():
            return {"runs": [], "trajectories": {}}
        return json.loads(p.read_text())

    def save_manifest(self, m: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / MANIFEST).write_text(json.dumps(m, indent=1, sort_keys=True) + "\n")
