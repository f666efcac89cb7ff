"""Weighted particle approximation of the posterior over (theta, V_1..V_m).

The angle lives on a circle of circumference pi: the likelihood is
pi-periodic and the prior is uniform on [0, pi). Means and deviations of the
angular coordinate are taken on that circle.

Visibility coordinates that no record has touched yet are still exact draws
from the uniform prior, independent of everything else. The ensemble tracks
them in ``fixed``; their posterior mean is reported as exactly 0.5 and
resampling redraws them from the prior instead of jittering them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .exceptions import DegeneratePosteriorError, UndefinedMeanError
from .kernels import MIN_RESULTANT, PI
from .model import S_VALUES, ExperimentRecord, ParameterPoint

PRIOR_MEAN_V = 0.5
WEIGHT_TOL = 1e-12


def gdiag(G) -> np.ndarray:
    """Diagonal of a weight matrix given as WeightMatrix, vector or matrix."""
    arr = np.asarray(getattr(G, "diag", G), dtype=float)
    if arr.ndim == 2:
        arr = np.diag(arr)
    return arr


class Ensemble:
    """Particle positions ``x`` (shape ``(1 + m, n_p)``) and weights ``w``."""

    __slots__ = ("x", "w", "s_values", "fixed", "_trig")

    def __init__(self, x, w, s_values: Sequence[int] = S_VALUES, fixed=None, check=True):
        self._trig = None
        self.x = np.ascontiguousarray(x, dtype=float)
        self.w = np.ascontiguousarray(w, dtype=float)
        self.s_values = np.asarray(s_values, dtype=float)
        m = len(self.s_values)
        self.fixed = (
            np.zeros(m, dtype=bool) if fixed is None else np.array(fixed, dtype=bool)
        )
        if check:
            self.validate()

    def validate(self):
        m = len(self.s_values)
        if self.x.ndim != 2 or self.x.shape[0] != m + 1:
            raise ValueError(f"positions must have shape ({m + 1}, n_p), got {self.x.shape}")
        if self.w.shape != (self.x.shape[1],):
            raise ValueError("one weight per particle is required")
        if self.fixed.shape != (m,):
            raise ValueError("fixed mask must have one entry per control")
        if np.any(self.w < 0) or abs(self.w.sum() - 1.0) > WEIGHT_TOL:
            raise ValueError("weights must be non-negative and sum to 1")
        t = self.x[0]
        if np.any((t < 0) | (t >= PI)):
            raise ValueError("angles must lie in [0, pi)")
        v = self.x[1:]
        if np.any((v < 0) | (v > 1)):
            raise ValueError("visibilities must lie in [0, 1]")

    @classmethod
    def from_points(cls, points, weights=None, s_values=S_VALUES):
        x = np.array([p.as_array() if isinstance(p, ParameterPoint) else p for p in points]).T
        n = x.shape[1]
        w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, float)
        return cls(x, w, s_values)

    @property
    def n_p(self) -> int:
        return self.w.shape[0]

    @property
    def theta(self) -> np.ndarray:
        return self.x[0]

    @property
    def trig(self) -> np.ndarray:
        """Cached cos/sin of 2 theta and of 2 s_i theta (positions never change in place)."""
        if self._trig is None:
            self._trig = kernels.trig_table(self.x[0], self.s_values)
        return self._trig

    def fringe(self, setting) -> np.ndarray:
        return self.trig[2 + 2 * setting.index + int(setting.basis)]

    def copy(self) -> "Ensemble":
        out = Ensemble(self.x.copy(), self.w.copy(), self.s_values, self.fixed, check=False)
        out._trig = None if self._trig is None else self._trig.copy()
        return out


@dataclass
class PosteriorSummary:
    mean: ParameterPoint
    covariance: np.ndarray
    scalar_variance: float


def init_prior(n_p: int, rng: np.random.Generator, s_values: Sequence[int] = S_VALUES) -> Ensemble:
    """Particles i.i.d. from the uniform prior on [0, pi) x [0, 1]^m."""
    if n_p < 2:
        raise ValueError(f"n_p must be at least 2, got {n_p}")
    m = len(s_values)
    x = np.empty((m + 1, n_p))
    x[0] = rng.random(n_p) * PI
    x[0][x[0] >= PI] = 0.0
    x[1:] = rng.random((m, n_p))
    w = np.full(n_p, 1.0 / n_p)
    return Ensemble(x, w, s_values, fixed=np.ones(m, dtype=bool), check=False)


def _log_space_update(ens: Ensemble, i: int, setting, outcome) -> np.ndarray:
    lp = 0.5 * (1.0 + ens.x[1 + i] * ens.fringe(setting))
    lik = lp if outcome > 0 else 1.0 - lp
    with np.errstate(divide="ignore"):
        logw = np.log(ens.w) + np.log(lik)
    top = logw.max()
    if not np.isfinite(top):
        raise DegeneratePosteriorError(
            f"all particles excluded by s={setting.s} {setting.basis.name} outcome {outcome}"
        )
    return np.exp(logw - top)


def bayes_update(ens: Ensemble, record: ExperimentRecord) -> Ensemble:
    """Multiply weights by the record's likelihood and renormalize."""
    st = record.setting
    i = st.index
    if ens.s_values[i] != st.s:
        raise ValueError(f"{st} does not match the ensemble controls {ens.s_values}")
    w = kernels.reweight(ens.w, ens.fringe(st), ens.x[1 + i], record.outcome)
    total = w.sum()
    if not (total > 0.0 and math.isfinite(total)):
        w = _log_space_update(ens, i, st, record.outcome)
        total = w.sum()
    w /= total
    fixed = ens.fixed.copy()
    fixed[i] = False
    out = Ensemble(ens.x, w, ens.s_values, fixed, check=False)
    out._trig = ens._trig
    return out


def _sums(ens: Ensemble) -> np.ndarray:
    return kernels.weighted_sums(ens.x, ens.w, ens.trig)


def _mean_from_sums(ens: Ensemble, sums: np.ndarray) -> np.ndarray:
    total = sums[-1]
    if math.hypot(sums[0], sums[1]) / total < MIN_RESULTANT:
        raise UndefinedMeanError("posterior over the angle is too close to uniform")
    mu = np.empty(ens.x.shape[0])
    mu[0] = kernels.angle_from_sums(sums[0], sums[1])
    mu[1:] = sums[2:-1] / total
    mu[1:][ens.fixed] = PRIOR_MEAN_V
    return mu


def circular_mean(ens: Ensemble) -> float:
    """Weighted mean angle on the period-pi circle, in [0, pi)."""
    return float(_mean_from_sums(ens, _sums(ens))[0])


def posterior_mean(ens: Ensemble) -> np.ndarray:
    """Circular mean of the angle followed by the visibility means."""
    return _mean_from_sums(ens, _sums(ens))


def wrapped_difference(a, mu):
    """Signed difference on the period-pi circle, in [-pi/2, pi/2)."""
    return kernels.wrap_diff(np.asarray(a, dtype=float), mu)


def summarize(ens: Ensemble, G) -> PosteriorSummary:
    mu = posterior_mean(ens)
    cov = kernels.centered_cov(ens.x, ens.w, mu)
    g = gdiag(G)
    return PosteriorSummary(
        mean=ParameterPoint.from_array(mu),
        covariance=cov,
        scalar_variance=float(g @ np.diag(cov)),
    )


def effective_sample_size(ens: Ensemble) -> float:
    return float(1.0 / np.sum(ens.w**2))


def _reflect_unit(v: np.ndarray) -> np.ndarray:
    v = np.mod(v, 2.0)
    return np.where(v > 1.0, 2.0 - v, v)


def resample(ens: Ensemble, rng: np.random.Generator, a: float = 0.98) -> Ensemble:
    """Liu-West resampling.

    Parents are drawn proportionally to weight, pulled toward the posterior
    mean by ``a`` and jittered with covariance ``(1 - a^2) Cov``. Untouched
    visibility coordinates are redrawn from the prior.
    """
    if not 0.0 < a < 1.0:
        raise ValueError("shrinkage must lie in (0, 1)")
    n = ens.n_p
    mu = posterior_mean(ens)
    active = np.concatenate(([0], 1 + np.flatnonzero(~ens.fixed)))
    cov = kernels.centered_cov(ens.x, ens.w, mu)[np.ix_(active, active)]

    cdf = np.cumsum(ens.w)
    parents = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    np.minimum(parents, n - 1, out=parents)

    evals, evecs = np.linalg.eigh(0.5 * (cov + cov.T))
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    noise = math.sqrt(1.0 - a * a) * (root @ rng.standard_normal((len(active), n)))

    x = np.empty_like(ens.x)
    px = ens.x[:, parents]
    t = mu[0] + a * kernels.wrap_diff(px[0], mu[0]) + noise[0]
    t = np.mod(t, PI)
    t[t >= PI] = 0.0
    x[0] = t
    for r, row in enumerate(active[1:], start=1):
        x[row] = _reflect_unit(mu[row] + a * (px[row] - mu[row]) + noise[r])
    for j in np.flatnonzero(ens.fixed):
        x[1 + j] = rng.random(n)
    return Ensemble(x, np.full(n, 1.0 / n), ens.s_values, ens.fixed, check=False)


def save_snapshot(ens: Ensemble, path) -> None:
    """One particle per line: theta, V_1..V_m, w."""
    lines = [
        "# s_values=" + ",".join(str(int(s)) for s in ens.s_values),
        "# fixed=" + ",".join(str(int(f)) for f in ens.fixed),
    ]
    data = np.vstack([ens.x, ens.w[None, :]]).T
    lines += [",".join(repr(float(v)) for v in row) for row in data]
    Path(path).write_text("\n".join(lines) + "\n")


def load_snapshot(path) -> Ensemble:
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].strip().partition("=")
            meta[key] = [int(t) for t in val.split(",")]
        elif line.strip():
            rows.append([float(t) for t in line.split(",")])
    data = np.array(rows).T
    return Ensemble(data[:-1], data[-1], meta.get("s_values", S_VALUES), meta.get("fixed"))
