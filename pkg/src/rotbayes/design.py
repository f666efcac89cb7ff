"""Greedy one-step experiment design.

For every (control, basis) candidate the expected posterior scalar variance
``sum_o P(o) Tr[G Cov(posterior | o)]`` is evaluated by exact enumeration of
the two outcomes; the candidate with the smallest value is measured next.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .exceptions import UndefinedMeanError
from .model import ControlSetting, candidate_settings
from .particles import Ensemble, gdiag

PARAM_NAMES = ("theta", "V1", "V2", "V3", "V4")


@dataclass(frozen=True)
class WeightMatrix:
    """Diagonal weight matrix; entry 0 weights the angle, entry 1+i visibility i."""

    diag: tuple[float, ...]

    def __post_init__(self):
        d = tuple(float(v) for v in np.asarray(self.diag, dtype=float).ravel())
        object.__setattr__(self, "diag", d)
        if len(d) < 2:
            raise ValueError("weight matrix needs the angle and at least one visibility")
        if any(v < 0 or not np.isfinite(v) for v in d):
            raise ValueError(f"weights must be finite and non-negative: {d}")
        if not any(v > 0 for v in d):
            raise ValueError("at least one weight must be positive")

    @classmethod
    def from_matrix(cls, mat) -> "WeightMatrix":
        mat = np.asarray(mat, dtype=float)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("weight matrix must be square")
        if np.any(mat - np.diag(np.diag(mat))):
            raise ValueError("only diagonal weight matrices are supported")
        return cls(tuple(np.diag(mat)))

    @classmethod
    def select(cls, *names: str, n_controls: int = 4) -> "WeightMatrix":
        """Unit weight on each named parameter, e.g. ``select("theta", "V4")``."""
        labels = ("theta",) + tuple(f"V{i + 1}" for i in range(n_controls))
        diag = [0.0] * len(labels)
        for name in names:
            if name == "all":
                diag = [1.0] * len(labels)
                continue
            try:
                diag[labels.index(name)] = 1.0
            except ValueError:
                raise ValueError(f"unknown parameter {name!r}; expected one of {labels}") from None
        return cls(tuple(diag))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.diag)

    def scaled(self, c: float) -> "WeightMatrix":
        return WeightMatrix(tuple(c * v for v in self.diag))

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.diag, dtype=dtype)


@dataclass(frozen=True)
class CandidateEvaluation:
    setting: ControlSetting
    expected_variance: float
    predictive: tuple[float, float]  # P(+1), P(-1)


def _scores(ens: Ensemble, G):
    g = gdiag(G)
    if g.shape != (ens.x.shape[0],):
        raise ValueError(f"weight matrix has {g.size} entries, ensemble has {ens.x.shape[0]} parameters")
    ev, pp, ok = kernels.score_candidates(ens.x, ens.w, ens.trig, g, ens.fixed)
    if not ok:
        raise UndefinedMeanError("a hypothetical posterior has no circular mean")
    return ev, pp


def predictive_probability(ens: Ensemble, setting: ControlSetting, outcome: int) -> float:
    """Marginal probability of ``outcome`` under the particle posterior."""
    w = kernels.reweight(ens.w, ens.fringe(setting), ens.x[1 + setting.index], outcome)
    return float(w.sum())


def evaluate_candidates(ens: Ensemble, G) -> list[CandidateEvaluation]:
    """Evaluations for every candidate, in tie-break order."""
    ev, pp = _scores(ens, G)
    out = []
    for st in candidate_settings(ens.s_values.astype(int)):
        c = 2 * st.index + int(st.basis)
        out.append(CandidateEvaluation(st, max(float(ev[c]), 0.0), (float(pp[c]), 1.0 - float(pp[c]))))
    return out


def expected_variance(ens: Ensemble, setting: ControlSetting, G) -> float:
    ev, _ = _scores(ens, G)
    return max(float(ev[2 * setting.index + int(setting.basis)]), 0.0)


def greedy_select(ens: Ensemble, G) -> ControlSetting:
    """Candidate with the lowest expected variance; ties go to smaller s, then B1."""
    ev, _ = _scores(ens, G)
    best = None
    best_val = np.inf
    for st in candidate_settings(ens.s_values.astype(int)):
        val = ev[2 * st.index + int(st.basis)]
        if val < best_val:
            best, best_val = st, val
    return best
