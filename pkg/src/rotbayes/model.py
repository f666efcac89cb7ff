"""Measurement model of the noisy rotation sensor.

A photon prepared with angular momentum ``s`` and measured in one of two
polarization bases returns ``+1`` with probability
``(1 + V_s cos 2 s theta) / 2`` (basis B1) or ``(1 + V_s sin 2 s theta) / 2``
(basis B2). A photon at control ``s`` costs ``s`` resources.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

S_VALUES: tuple[int, ...] = (1, 2, 11, 51)


class Basis(enum.IntEnum):
    B1 = 0  # cosine fringe
    B2 = 1  # sine fringe

    @classmethod
    def parse(cls, value) -> "Basis":
        if isinstance(value, Basis):
            return value
        if isinstance(value, str):
            try:
                return cls[value.strip().upper()]
            except KeyError:
                raise ValueError(f"unknown basis {value!r}") from None
        return cls(int(value))


@dataclass(frozen=True)
class ParameterPoint:
    """Rotation angle in [0, pi) and one visibility per control."""

    theta: float
    visibilities: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta))
        object.__setattr__(
            self, "visibilities", tuple(float(v) for v in self.visibilities)
        )
        if not 0.0 <= self.theta < math.pi:
            raise ValueError(f"theta={self.theta} outside [0, pi)")
        if not self.visibilities:
            raise ValueError("at least one visibility is required")
        for v in self.visibilities:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"visibility {v} outside [0, 1]")

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "ParameterPoint":
        return cls(arr[0], tuple(arr[1:]))

    def as_array(self) -> np.ndarray:
        return np.array((self.theta, *self.visibilities))


@dataclass(frozen=True)
class ControlSetting:
    """Which control (0-based position in the s list) and which basis."""

    index: int
    basis: Basis
    s: int

    def __post_init__(self):
        object.__setattr__(self, "basis", Basis.parse(self.basis))
        if self.index < 0 or self.s < 1:
            raise ValueError(f"invalid control setting {self}")

    @classmethod
    def of(cls, index: int, basis, s_values: Sequence[int] = S_VALUES):
        return cls(index, Basis.parse(basis), int(s_values[index]))

    @classmethod
    def from_s(cls, s: int, basis, s_values: Sequence[int] = S_VALUES):
        try:
            index = list(s_values).index(int(s))
        except ValueError:
            raise ValueError(f"s={s} is not one of {tuple(s_values)}") from None
        return cls(index, Basis.parse(basis), int(s))


def candidate_settings(s_values: Sequence[int] = S_VALUES) -> list[ControlSetting]:
    """All (control, basis) pairs in tie-break order: smaller s first, then B1."""
    order = sorted(range(len(s_values)), key=lambda i: s_values[i])
    return [ControlSetting.of(i, b, s_values) for i in order for b in Basis]


@dataclass(frozen=True)
class ExperimentRecord:
    setting: ControlSetting
    outcome: int

    def __post_init__(self):
        if self.outcome not in (-1, 1):
            raise ValueError(f"outcome must be +1 or -1, got {self.outcome}")


class ResourceLedger:
    """Uses per control and the total resource count N = sum nu_i s_i."""

    def __init__(self, s_values: Sequence[int] = S_VALUES):
        self.s_values = tuple(int(s) for s in s_values)
        self.nu = [0] * len(self.s_values)
        self.N = 0

    def append(self, setting: ControlSetting) -> int:
        if self.s_values[setting.index] != setting.s:
            raise ValueError(f"{setting} does not match controls {self.s_values}")
        self.nu[setting.index] += 1
        self.N += setting.s
        assert self.N == sum(n * s for n, s in zip(self.nu, self.s_values))
        return self.N

    @property
    def photons(self) -> int:
        return sum(self.nu)


@dataclass
class RunRecord:
    records: list[ExperimentRecord] = field(default_factory=list)
    true_point: ParameterPoint | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return resource_cost(self)

    @property
    def K(self) -> int:
        return len(self.records)

    def __add__(self, other: "RunRecord") -> "RunRecord":
        return RunRecord(self.records + other.records, self.true_point)


def fringe(setting: ControlSetting, theta: float) -> float:
    arg = 2.0 * setting.s * theta
    return math.cos(arg) if setting.basis == Basis.B1 else math.sin(arg)


def likelihood(outcome: int, setting: ControlSetting, point: ParameterPoint) -> float:
    v = point.visibilities[setting.index]
    p_plus = 0.5 * (1.0 + v * fringe(setting, point.theta))
    # 1 - p_plus keeps the two outcomes summing to exactly 1.0
    return p_plus if outcome > 0 else 1.0 - p_plus


def sample_outcome(
    rng: np.random.Generator, setting: ControlSetting, point: ParameterPoint
) -> int:
    return 1 if rng.random() < likelihood(1, setting, point) else -1


def resource_cost(run: RunRecord | Iterable[ExperimentRecord]) -> int:
    records = run.records if isinstance(run, RunRecord) else run
    return sum(r.setting.s for r in records)
