"""Per-input surprise reports and their CSV wire format.

The CSV schema is ``id,sa,class_used,flag`` with an optional leading comment
line (``# {json}``) carrying the full run configuration for provenance.
Floats are written with shortest round-trip repr, so identical runs produce
byte-identical files.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import SurprisalError


@dataclass
class SurpriseReport:
    """Scores for a batch of inputs plus the metadata needed to reuse them."""

    kind: str                       # "lsa" | "dsa"
    selection: str                  # NeuronSelector.describe() of the run
    ids: tuple[str, ...]
    values: np.ndarray              # float64; NaN on flagged rows
    class_used: tuple[object, ...]  # int, "unconditioned", or None on flagged rows
    flags: tuple[str, ...]          # "" when the row scored cleanly
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.ids)
        if not (len(self.values) == len(self.class_used) == len(self.flags) == n):
            raise SurprisalError("report columns have mismatched lengths")

    @property
    def num_rows(self) -> int:
        return len(self.ids)

    def clean_mask(self) -> np.ndarray:
        return np.array([f == "" for f in self.flags], dtype=bool)

    def clean_values(self) -> np.ndarray:
        return self.values[self.clean_mask()]

    def write_csv(self, path: str | Path) -> None:
        path = Path(path)
        header = {"kind": self.kind, "selection": self.selection, **self.config}
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(["id", "sa", "class_used", "flag"])
            for i in range(self.num_rows):
                sa = repr(float(self.values[i]))
                used = self.class_used[i]
                writer.writerow([self.ids[i], sa, "" if used is None else used, self.flags[i]])


def read_report_csv(path: str | Path) -> SurpriseReport:
    """Parse a report CSV written by :meth:`SurpriseReport.write_csv`."""
    path = Path(path)
    config: dict = {}
    rows: list[list[str]] = []
    with open(path, newline="") as fh:
        first = fh.readline()
        if first.startswith("#"):
            try:
                config = json.loads(first[1:].strip())
            except json.JSONDecodeError:
                config = {}
        else:
            fh.seek(0)
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["id", "sa"]:
            raise SurprisalError(f"{path}: not a surprise report CSV (header {header})")
        rows = [row for row in reader if row]
    ids = tuple(row[0] for row in rows)
    values = np.array([float(row[1]) for row in rows], dtype=np.float64)
    class_used = tuple(_parse_class(row[2]) for row in rows)
    flags = tuple(row[3] if len(row) > 3 else "" for row in rows)
    kind = str(config.pop("kind", "unknown"))
    selection = str(config.pop("selection", "unknown"))
    return SurpriseReport(
        kind=kind, selection=selection, ids=ids, values=values,
        class_used=class_used, flags=flags, config=config,
    )


def _parse_class(text: str):
    if text == "":
        return None
    if text == "unconditioned":
        return "unconditioned"
    return int(text)
