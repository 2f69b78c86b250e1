"""Time-series container produced by simulations and consumed by the fits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SERIES_COLUMNS = ("t", "sup_u_dev", "sup_v", "bc_residual", "energy")


@dataclass
class ExperimentReport:
    """Per-step diagnostics plus fitted quantities.

    ``sup_u_dev`` is measured against the current trapezoidal mean of u.
    ``extra`` carries diagnostics outside the CSV column set (``mean_u``,
    ``max_abs_u``). ``states`` is filled only when the run keeps states.
    """

    series: dict = field(default_factory=lambda: {k: [] for k in SERIES_COLUMNS})
    extra: dict = field(default_factory=dict)
    states: list = field(default_factory=list)
    fitted: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    status: str = "pending"

    def append(self, row: dict):
        t = row["t"]
        if self.series["t"] and not t > self.series["t"][-1]:
            raise ValueError(f"time must increase strictly ({t} after {self.series['t'][-1]})")
        for k in SERIES_COLUMNS:
            self.series[k].append(float(row[k]))
        for k, val in row.items():
            if k not in SERIES_COLUMNS:
                self.extra.setdefault(k, []).append(float(val))

    def __len__(self):
        return len(self.series["t"])

    def column(self, name: str) -> np.ndarray:
        if name in self.series:
            return np.asarray(self.series[name])
        return np.asarray(self.extra[name])
