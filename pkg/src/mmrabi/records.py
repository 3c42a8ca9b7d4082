"""Plain result containers and the deterministic CSV writer."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


def fmt(value) -> str:
    """Floats with 17 significant digits (exact round-trip); other values via str."""
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    return buf.getvalue()


@dataclass
class TimeSeries:
    """Observables sampled on a time grid. ``data`` maps names to arrays with time first."""

    times: np.ndarray
    data: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    def scalar_columns(self):
        return [k for k, v in self.data.items() if np.ndim(v) == 1]

    def to_csv(self, columns=None) -> str:
        columns = columns or self.scalar_columns()
        rows = zip(self.times, *(np.real(self.data[c]) for c in columns))
        return csv_text(["t", *columns], rows)
