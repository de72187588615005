"""Time series of observables with CSV export."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class Trajectory:
    t: np.ndarray
    columns: dict[str, np.ndarray]
    gamma_unit: float
    meta: dict = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.t
        if name == "t_gamma":
            return self.t * self.gamma_unit
        return self.columns[name]

    def __len__(self):
        return len(self.t)

    @property
    def t_gamma(self) -> np.ndarray:
        return self.t * self.gamma_unit

    def final(self, name: str) -> float:
        return float(self[name][-1])

    def window(self, t_from: float, t_to: float = np.inf) -> np.ndarray:
        return (self.t >= t_from) & (self.t <= t_to)

    def csv_text(self, names: list[str]) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(names)
        data = [np.asarray(self[n]) for n in names]
        for row in zip(*data):
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_csv(self, path, names: list[str]):
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text(names))


def fit_exponential_rate(t: np.ndarray, y: np.ndarray) -> float:
    """Least-squares rate ``r`` in ``y ~ exp(-r t)`` (log-linear fit)."""
    y = np.asarray(y, dtype=float)
    keep = y > 0
    if keep.sum() < 2:
        raise ValueError("need at least two positive samples to fit a rate")
    slope = np.polyfit(np.asarray(t)[keep], np.log(y[keep]), 1)[0]
    return float(-slope)
