"""Estimation campaigns: J true angles, M adaptive runs each.

Every run records ``(Delta^2, n)`` after each photon. Runs are aligned on a
grid of resource windows of width ``cluster_width``: a run's value in a
window is the mean of its samples there, or, if it jumped over the window
(one photon at s=51 costs more than a window), the precision it held on
entering it. Values of runs sharing a run index are averaged over angles and
the median over run indices is reported per window.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .design import WeightMatrix, greedy_select
from .exceptions import DegeneratePosteriorError, PoolExhaustedError, UndefinedMeanError
from .model import (
    S_VALUES,
    ExperimentRecord,
    ParameterPoint,
    ResourceLedger,
    RunRecord,
    sample_outcome,
)
from .particles import (
    bayes_update,
    effective_sample_size,
    gdiag,
    init_prior,
    posterior_mean,
    resample,
    wrapped_difference,
)

log = logging.getLogger(__name__)

_CI_STREAM = 0xB0075


@dataclass(frozen=True)
class CampaignConfig:
    G: WeightMatrix
    true_points: tuple[ParameterPoint, ...]
    seed: int = 0
    M: int = 200
    n_p: int = 5000
    N_max: int = 5000
    K_max: int = 100_000
    cluster_width: int = 50
    cluster_min_n: int = 100
    bootstrap_resamples: int = 10_000
    confidence: float = 0.99
    s_values: tuple[int, ...] = S_VALUES
    shrinkage: float = 0.98
    resample_threshold: float = 0.5
    workers: int = 1
    bound_visibilities: tuple[float, ...] | None = None  # None: mean over true points

    def __post_init__(self):
        object.__setattr__(self, "true_points", tuple(self.true_points))
        object.__setattr__(self, "s_values", tuple(int(s) for s in self.s_values))
        if not isinstance(self.G, WeightMatrix):
            object.__setattr__(self, "G", WeightMatrix(tuple(gdiag(self.G))))
        checks = {
            "true_points": len(self.true_points) >= 1,
            "M": self.M >= 1,
            "n_p": self.n_p >= 2,
            "N_max": self.N_max >= 1,
            "K_max": self.K_max >= 1,
            "cluster_width": self.cluster_width >= 1,
            "cluster_min_n": self.cluster_min_n >= 0,
            "bootstrap_resamples": self.bootstrap_resamples >= 1,
            "confidence": 0.0 < self.confidence < 1.0,
            "shrinkage": 0.0 < self.shrinkage < 1.0,
            "resample_threshold": 0.0 <= self.resample_threshold <= 1.0,
            "workers": self.workers >= 1,
            "s_values": len(self.s_values) >= 1 and min(self.s_values) >= 1,
        }
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise ValueError("invalid campaign config field(s): " + ", ".join(bad))
        m = len(self.s_values)
        if len(self.G.diag) != m + 1:
            raise ValueError(f"G must have {m + 1} diagonal entries")
        for p in self.true_points:
            if len(p.visibilities) != m:
                raise ValueError(f"true point {p} needs {m} visibilities")
        if self.bound_visibilities is not None:
            bv = tuple(float(v) for v in self.bound_visibilities)
            object.__setattr__(self, "bound_visibilities", bv)
            if len(bv) != m or any(not 0.0 <= v <= 1.0 for v in bv):
                raise ValueError("invalid campaign config field(s): bound_visibilities")

    def visibilities_for_bound(self) -> tuple[float, ...]:
        if self.bound_visibilities is not None:
            return self.bound_visibilities
        vis = np.array([p.visibilities for p in self.true_points])
        return tuple(float(v) for v in vis.mean(axis=0))

    @property
    def J(self) -> int:
        return len(self.true_points)


@dataclass(frozen=True)
class PrecisionSample:
    delta_sq: float
    n: int
    run_id: int
    angle_id: int
    s: int = 0


@dataclass
class RunResult:
    angle_id: int
    run_id: int
    record: RunRecord
    n: np.ndarray
    delta_sq: np.ndarray
    s_used: np.ndarray
    flagged: str | None = None
    estimates: np.ndarray | None = None  # posterior means per step, when traced

    def samples(self) -> list[PrecisionSample]:
        return [
            PrecisionSample(float(d), int(n), self.run_id, self.angle_id, int(s))
            for d, n, s in zip(self.delta_sq, self.n, self.s_used)
        ]


def weighted_error(estimate, truth, G) -> float:
    """G-weighted squared error; the angle uses the wrapped period-pi difference."""
    est = estimate.as_array() if isinstance(estimate, ParameterPoint) else np.asarray(estimate, float)
    tru = truth.as_array() if isinstance(truth, ParameterPoint) else np.asarray(truth, float)
    g = gdiag(G)
    dev = est - tru
    dev[0] = wrapped_difference(est[0], tru[0])
    return float(g @ (dev * dev))


def run_seeds(seed: int, angle_id: int, run_id: int):
    """Independent (filter, outcome) generators for one run."""
    ss = np.random.SeedSequence(seed, spawn_key=(angle_id, run_id))
    return [np.random.default_rng(c) for c in ss.spawn(2)]


def run_estimation(config: CampaignConfig, angle_id: int, run_id: int, pool=None,
                   trace: bool = False) -> RunResult:
    """One adaptive run until the budget N_max or the photon cap K_max is hit.

    Outcomes come from the simulator at ``true_points[angle_id]`` unless a
    replay ``pool`` (anything with ``next_outcome(angle_id, setting)``) is given.
    With ``trace`` the posterior mean after every photon is kept as well.
    """
    filt_rng, outcome_rng = run_seeds(config.seed, angle_id, run_id)
    truth = config.true_points[angle_id]
    truth_arr = truth.as_array()
    g = np.asarray(config.G.diag)
    ledger = ResourceLedger(config.s_values)
    records: list[ExperimentRecord] = []
    ns, deltas, s_used, means = [], [], [], []
    flagged = None
    ens = init_prior(config.n_p, filt_rng, config.s_values)
    threshold = config.resample_threshold * config.n_p
    try:
        while ledger.N < config.N_max and ledger.photons < config.K_max:
            setting = greedy_select(ens, g)
            if pool is None:
                outcome = sample_outcome(outcome_rng, setting, truth)
            else:
                outcome = pool.next_outcome(angle_id, setting)
            rec = ExperimentRecord(setting, outcome)
            ens = bayes_update(ens, rec)
            if effective_sample_size(ens) < threshold:
                ens = resample(ens, filt_rng, config.shrinkage)
            records.append(rec)
            ns.append(ledger.append(setting))
            s_used.append(setting.s)
            mu = posterior_mean(ens)
            deltas.append(weighted_error(mu, truth_arr, g))
            if trace:
                means.append(mu)
    except PoolExhaustedError as exc:
        flagged = f"pool-exhausted: {exc}"
    except (DegeneratePosteriorError, UndefinedMeanError) as exc:
        flagged = f"{type(exc).__name__}: {exc}"
    if flagged:
        log.warning("run angle=%d run=%d flagged: %s", angle_id, run_id, flagged)
    n = np.asarray(ns, dtype=np.int64)
    s_arr = np.asarray(s_used, dtype=np.int64)
    if not np.array_equal(n, np.cumsum(s_arr)):
        raise AssertionError("resource ledger out of sync with consumed records")
    meta = {"seed": config.seed, "angle_id": angle_id, "run_id": run_id}
    return RunResult(
        angle_id,
        run_id,
        RunRecord(records, truth, meta),
        n,
        np.asarray(deltas, dtype=float),
        s_arr,
        flagged,
        np.array(means).reshape(-1, len(truth_arr)) if trace else None,
    )


# --------------------------------------------------------------------------
# clustering
# --------------------------------------------------------------------------


@dataclass
class ClusteredCurve:
    n_center: np.ndarray
    median: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    count: np.ndarray
    window: np.ndarray = field(repr=False)
    values: list = field(default_factory=list, repr=False)  # per-window run values

    def __len__(self):
        return len(self.n_center)


@dataclass
class SampleTable:
    run_id: np.ndarray
    angle_id: np.ndarray
    n: np.ndarray
    delta_sq: np.ndarray
    s: np.ndarray

    @classmethod
    def from_samples(cls, samples: Iterable[PrecisionSample]) -> "SampleTable":
        samples = list(samples)
        return cls(
            np.array([p.run_id for p in samples], dtype=np.int64),
            np.array([p.angle_id for p in samples], dtype=np.int64),
            np.array([p.n for p in samples], dtype=np.int64),
            np.array([p.delta_sq for p in samples], dtype=float),
            np.array([p.s for p in samples], dtype=np.int64),
        )

    @classmethod
    def from_runs(cls, runs: Sequence[RunResult]) -> "SampleTable":
        def cat(attr, dtype):
            parts = [np.asarray(getattr(r, attr), dtype=dtype) for r in runs]
            return np.concatenate(parts) if parts else np.empty(0, dtype)

        return cls(
            np.concatenate([np.full(len(r.n), r.run_id) for r in runs]) if runs else np.empty(0, np.int64),
            np.concatenate([np.full(len(r.n), r.angle_id) for r in runs]) if runs else np.empty(0, np.int64),
            cat("n", np.int64),
            cat("delta_sq", float),
            cat("s_used", np.int64),
        )


def assign_windows(n, width: int, min_n: int) -> np.ndarray:
    """Window index ``n // width`` per sample, or -1 when ``n <= min_n``."""
    n = np.asarray(n, dtype=np.int64)
    return np.where(n > min_n, n // width, -1)


def _series_on_windows(n, d, width, min_n):
    """(first window, values) for one run; NaN where the run has no value yet."""
    if len(n) == 0 or n[-1] <= min_n:
        return 0, np.empty(0)
    order = np.argsort(n, kind="stable")
    n, d = n[order], d[order]
    lo = (min_n + 1) // width
    hi = int(n[-1] // width)
    win = assign_windows(n, width, min_n)
    k = hi - lo + 1
    sums = np.bincount(win[win >= 0] - lo, weights=d[win >= 0], minlength=k)
    cnts = np.bincount(win[win >= 0] - lo, minlength=k)
    vals = np.full(k, np.nan)
    has = cnts > 0
    vals[has] = sums[has] / cnts[has]
    ends = (np.arange(lo, hi + 1) + 1) * width
    prev = np.searchsorted(n, ends, side="left") - 1
    carry = ~has & (prev >= 0)
    vals[carry] = d[prev[carry]]
    return lo, vals


def cluster(samples, width: int = 50, min_n: int = 100) -> ClusteredCurve:
    """Median over runs of the angle-averaged precision in each resource window.

    ``samples`` is a SampleTable or an iterable of PrecisionSample. CIs are
    left as NaN; see ``attach_ci``.
    """
    if width < 1:
        raise ValueError("window width must be at least 1")
    tab = samples if isinstance(samples, SampleTable) else SampleTable.from_samples(samples)
    acc: dict[int, dict[int, list]] = {}
    keys = sorted(set(zip(tab.run_id.tolist(), tab.angle_id.tolist())))
    for run_id, angle_id in keys:
        sel = (tab.run_id == run_id) & (tab.angle_id == angle_id)
        lo, vals = _series_on_windows(tab.n[sel], tab.delta_sq[sel], width, min_n)
        per_run = acc.setdefault(run_id, {})
        for off, v in enumerate(vals):
            if not math.isnan(v):
                per_run.setdefault(lo + off, []).append(v)
    windows = sorted({w for per_run in acc.values() for w in per_run})
    rows_vals = []
    for w in windows:
        rows_vals.append(
            np.array([np.mean(acc[r][w]) for r in sorted(acc) if w in acc[r]])
        )
    k = len(windows)
    return ClusteredCurve(
        n_center=np.array(windows, dtype=float) * width + 0.5 * width,
        median=np.array([np.median(v) for v in rows_vals]),
        ci_low=np.full(k, np.nan),
        ci_high=np.full(k, np.nan),
        count=np.array([len(v) for v in rows_vals], dtype=np.int64),
        window=np.array(windows, dtype=np.int64),
        values=rows_vals,
    )


def truncate(curve: ClusteredCurve, n_limit: int, width: int) -> ClusteredCurve:
    """Drop windows whose lower edge lies beyond ``n_limit``.

    Runs stop at the first sample with n >= N_max, so every window starting
    at or below N_max holds a value from every completed run; later windows
    only see the runs whose last photon happened to overshoot into them.
    """
    keep = curve.window * width <= n_limit
    return ClusteredCurve(
        n_center=curve.n_center[keep],
        median=curve.median[keep],
        ci_low=curve.ci_low[keep],
        ci_high=curve.ci_high[keep],
        count=curve.count[keep],
        window=curve.window[keep],
        values=[v for v, k in zip(curve.values, keep) if k],
    )


def bootstrap_ci(values, resamples: int = 10_000, confidence: float = 0.99, rng=None):
    """Percentile bootstrap interval for the median."""
    vals = np.asarray(values, dtype=float)
    if vals.size < 2:
        raise ValueError("bootstrap CI needs at least two values")
    if not 0.0 < confidence < 1.0:
        raise ValueError("confidence must lie in (0, 1)")
    rng = np.random.default_rng(rng)
    idx = rng.integers(0, vals.size, size=(resamples, vals.size))
    meds = np.median(vals[idx], axis=1)
    alpha = 0.5 * (1.0 - confidence)
    lo, hi = np.quantile(meds, [alpha, 1.0 - alpha])
    return float(lo), float(hi)


def attach_ci(curve: ClusteredCurve, resamples: int, confidence: float, seed: int) -> ClusteredCurve:
    for row, (w, vals) in enumerate(zip(curve.window, curve.values)):
        if vals.size < 2:
            continue
        rng = np.random.default_rng(np.random.SeedSequence([seed, _CI_STREAM, int(w)]))
        curve.ci_low[row], curve.ci_high[row] = bootstrap_ci(vals, resamples, confidence, rng)
    return curve


def usage_profile(tab: SampleTable, windows: np.ndarray, width: int, min_n: int, s_values):
    """Share of photons per control among the samples falling in each window."""
    win = assign_windows(tab.n, width, min_n)
    shares = np.zeros((len(windows), len(s_values)))
    for row, w in enumerate(windows):
        used = tab.s[win == w]
        if used.size:
            shares[row] = [np.mean(used == s) for s in s_values]
    return shares


@dataclass
class CampaignResult:
    config: CampaignConfig
    curve: ClusteredCurve
    usage: np.ndarray
    runs: list[RunResult]

    @property
    def failures(self) -> list[RunResult]:
        return [r for r in self.runs if r.flagged]

    def failure_report(self) -> str:
        lines = [f"flagged runs: {len(self.failures)} of {len(self.runs)}"]
        lines += [f"angle={r.angle_id} run={r.run_id}: {r.flagged}" for r in self.failures]
        return "\n".join(lines) + "\n"


def _run_task(args):
    config, angle_id, run_id, pool = args
    return run_estimation(config, angle_id, run_id, pool)


def run_campaign(config: CampaignConfig, pool=None, workers: int | None = None) -> CampaignResult:
    """All J x M runs, clustered, with CIs and the per-window usage profile.

    The curve ends at the budget: windows starting past N_max are dropped.

    ``pool`` is an optional replay pool with a ``partition(M)`` method giving
    one single-consumer pool per run index.
    """
    parts = pool.partition(config.M) if pool is not None else {}
    tasks = [
        (config, a, r, parts.get(r) if pool is not None else None)
        for a in range(config.J)
        for r in range(config.M)
    ]
    workers = config.workers if workers is None else workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            runs = list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        runs = [_run_task(t) for t in tasks]
    runs.sort(key=lambda r: (r.angle_id, r.run_id))
    good = [r for r in runs if not r.flagged]
    tab = SampleTable.from_runs(good)
    curve = cluster(tab, config.cluster_width, config.cluster_min_n)
    curve = truncate(curve, config.N_max, config.cluster_width)
    attach_ci(curve, config.bootstrap_resamples, config.confidence, config.seed)
    usage = usage_profile(tab, curve.window, config.cluster_width, config.cluster_min_n, config.s_values)
    return CampaignResult(config, curve, usage, runs)
