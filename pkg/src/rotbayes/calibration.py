"""Frequency-based visibility estimator and the bundled reference table.

With ``nu`` shots per basis and ``f0``, ``f_plus`` the frequencies of the
outcome counted as +1 in bases B1 and B2,

    V = sqrt((nu [(2 f0 - 1)^2 + (2 f_plus - 1)^2] - 1) / (nu - 1))

Raw files label the B1 outcome ``0`` and the B2 outcome ``+``; both map to +1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from typing import NamedTuple

import numpy as np

from .model import S_VALUES, Basis, ControlSetting, ParameterPoint, likelihood


@dataclass(frozen=True)
class FrequencyRecord:
    f0: float
    f_plus: float
    nu: int

    def __post_init__(self):
        if not (0.0 <= self.f0 <= 1.0 and 0.0 <= self.f_plus <= 1.0):
            raise ValueError(f"frequencies must lie in [0, 1]: {self.f0}, {self.f_plus}")
        if int(self.nu) != self.nu or self.nu < 2:
            raise ValueError(f"invalid count nu={self.nu}: need an integer >= 2")


class VisibilityEstimate(NamedTuple):
    value: float
    clipped: bool


def visibility_estimate(record: FrequencyRecord) -> VisibilityEstimate:
    nu = record.nu
    radicand = (nu * ((2 * record.f0 - 1) ** 2 + (2 * record.f_plus - 1) ** 2) - 1) / (nu - 1)
    if radicand < 0.0:
        return VisibilityEstimate(0.0, True)
    if radicand > 1.0:
        return VisibilityEstimate(1.0, True)
    return VisibilityEstimate(math.sqrt(radicand), False)


def simulate_frequencies(rng: np.random.Generator, point: ParameterPoint, index: int, nu: int,
                         s_values=S_VALUES) -> FrequencyRecord:
    """Binomial frequencies of the +1 outcome in each basis for ``nu`` shots."""
    probs = [
        likelihood(1, ControlSetting.of(index, b, s_values), point) for b in (Basis.B1, Basis.B2)
    ]
    hits = rng.binomial(nu, probs)
    return FrequencyRecord(hits[0] / nu, hits[1] / nu, nu)


def load_si_table():
    """The eight reference (theta, V1..V4) points and the mean visibility row."""
    text = resources.files("rotbayes.data").joinpath("si_table.csv").read_text()
    points, mean = [], None
    for row in csv.DictReader(text.splitlines()):
        vis = tuple(float(row[f"V{i}"]) for i in range(1, 5))
        if row["row"] == "mean":
            mean = vis
        else:
            points.append(ParameterPoint(float(row["theta"]), vis))
    return points, mean


def read_frequency_csv(path):
    """Rows of (angle_id, s, FrequencyRecord) from a CSV with header angle_id,s,f0,f_plus,nu."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"angle_id", "s", "f0", "f_plus", "nu"} - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing column(s) {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                out.append((int(row["angle_id"]), int(row["s"]),
                            FrequencyRecord(float(row["f0"]), float(row["f_plus"]), int(row["nu"]))))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return out
